"""Step-size and slack-annealing schedules."""

from __future__ import annotations

from dataclasses import dataclass

from .grids import ConfigError


@dataclass(frozen=True)
class StepSchedule:
    """Positive step sizes gamma_k.

    Kinds
    -----
    constant        gamma_k = base
    inverse_power   gamma_k = base * (k+1)**(-delta); with
                    ``theorem_compliant`` the exponent is restricted to
                    (1/2, 1], the range whose step sums diverge while their
                    squares stay summable.
    piecewise       constant within epochs, divided by ``divisor`` at each
                    milestone epoch.
    """

    kind: str = "constant"
    base: float = 1.0
    delta: float = 0.6
    milestones: tuple = ()
    divisor: float = 2.0
    theorem_compliant: bool = False

    def __post_init__(self):
        if self.base <= 0.0:
            raise ConfigError(f"base step size must be > 0, got {self.base}")
        if self.kind not in ("constant", "inverse_power", "piecewise"):
            raise ConfigError(f"unknown step schedule kind: {self.kind!r}")
        if self.kind == "inverse_power":
            if self.delta <= 0.0:
                raise ConfigError("delta must be > 0")
            if self.theorem_compliant and not (0.5 < self.delta <= 1.0):
                raise ConfigError(
                    f"theorem-compliant mode needs delta in (1/2, 1], got {self.delta}")
        if self.kind == "piecewise":
            if self.divisor <= 0.0:
                raise ConfigError("divisor must be > 0")
            if list(self.milestones) != sorted(set(self.milestones)):
                raise ConfigError("milestones must be strictly increasing")

    @classmethod
    def constant(cls, base: float) -> "StepSchedule":
        return cls(kind="constant", base=base)

    @classmethod
    def inverse_power(cls, base: float, delta: float,
                      theorem_compliant: bool = False) -> "StepSchedule":
        return cls(kind="inverse_power", base=base, delta=delta,
                   theorem_compliant=theorem_compliant)

    @classmethod
    def piecewise(cls, base: float, milestones, divisor: float = 2.0) -> "StepSchedule":
        return cls(kind="piecewise", base=base, milestones=tuple(milestones),
                   divisor=divisor)

    def gamma(self, step: int, epoch: int = 0) -> float:
        if self.kind == "constant":
            return self.base
        if self.kind == "inverse_power":
            return self.base * float(step + 1) ** (-self.delta)
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.base / self.divisor ** passed


@dataclass(frozen=True)
class AnnealSchedule:
    """Episode-wise shrinking of the constraint slack width.

    With the ``"exponential"`` trigger the slack holds at ``epsilon0`` for
    ``warmup`` episodes, then follows ``epsilon0 * decay**t`` across
    episodes of ``epochs_per_episode`` epochs (the usual recipe keeps the
    slack wide for the first half of training so the latent weights settle
    near the unconstrained optimum before the feasible bands tighten).
    With ``"plateau"`` an episode ends only after ``patience`` consecutive
    evaluations improve by less than ``improvement_tol``.
    """

    epsilon0: float = 1.0
    decay: float = 0.88
    trigger: str = "exponential"
    patience: int = 3
    improvement_tol: float = 1e-4
    epsilon_min: float = 0.0
    epochs_per_episode: int = 1
    warmup: int = 0

    def __post_init__(self):
        if not (0.0 < self.epsilon0 <= 1.0):
            raise ConfigError(f"epsilon0 must be in (0, 1], got {self.epsilon0}")
        if not (0.0 < self.decay < 1.0):
            raise ConfigError(f"decay must be in (0, 1), got {self.decay}")
        if self.trigger not in ("exponential", "plateau"):
            raise ConfigError(f"unknown anneal trigger: {self.trigger!r}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.epsilon_min < 0.0:
            raise ConfigError("epsilon_min must be >= 0")
        if self.epochs_per_episode < 1:
            raise ConfigError("epochs_per_episode must be >= 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")

    def epsilon_at(self, episode: int) -> float:
        t = max(episode - self.warmup, 0)
        return max(self.epsilon0 * self.decay ** t, self.epsilon_min)


class PlateauTracker:
    """Counts consecutive non-improving evaluations of a metric."""

    def __init__(self, patience: int, tol: float):
        self.patience = patience
        self.tol = tol
        self.best = float("inf")
        self.stale = 0

    def update(self, metric: float) -> bool:
        """Record one evaluation; True when patience is exhausted (then resets)."""
        if metric < self.best - self.tol:
            self.best = metric
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.stale = 0
            return True
        return False
