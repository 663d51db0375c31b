"""Invariant checkers shared by the ``validate`` command and the test suite.

The checks re-derive every quantity from the same float expressions the
implementation uses, so they hold exactly (no tolerances) whenever the
implementation is correct:

* admissibility of each active pre-clip velocity, where the pulled-back
  branch is recognized by value identity with the constraint-boundary
  point (re-multiplying a rounded quotient can dip one ulp below the
  boundary even though the real product sits exactly on it);
* per-step containment of each coordinate in its attraction cell whenever
  the step bound is small against the cell margins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import rng_for
from .grids import (ConstraintParams, QuantGrid, feasible_intervals,
                    project_to_grid, slack_vectors)
from .models import LogisticModel, MoonsMlpModel, QuadraticToyModel, fd_check
from .skew import SkewStep, qp_oracle, skew_direction


def attraction_violations(params: ConstraintParams, grid: QuantGrid,
                          u: np.ndarray, w: np.ndarray, step: SkewStep) -> np.ndarray:
    """Active non-midpoint coordinates whose pre-clip velocity is inadmissible."""
    psi, dpsi = slack_vectors(params, grid, w)
    mask = np.zeros(grid.dim, dtype=bool)
    mask[step.active] = True
    mask[step.midpoint_hits] = False
    rhs = -params.alpha * psi
    pre = step.pre_clip
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = np.where(dpsi != 0.0, rhs / dpsi, np.nan)
    ok = (pre * dpsi >= rhs) | (pre == boundary)
    return np.flatnonzero(mask & ~ok)


class ContainmentChecker:
    """Detects coordinates that leave their attraction cell despite a small step.

    The attraction cell of a coordinate is the interval of points sharing
    its nearest level (midpoints between neighboring levels as borders,
    unbounded at the ends).  When ``gamma * max(m_clip, ||u||_inf)`` is
    below half the distance from the cell's feasible interval to the cell
    border, one update cannot move the coordinate out of the cell.
    """

    def __init__(self, params: ConstraintParams, grid: QuantGrid):
        self.params = params
        self.grid = grid
        self._margins = {}
        for levels, idx in grid.groups():
            bands = feasible_intervals(params, grid, int(idx[0]))
            margins = np.empty(levels.size)
            for j, (lo, hi) in enumerate(bands):
                left = np.inf if j == 0 else lo - 0.5 * (levels[j - 1] + levels[j])
                right = np.inf if j == levels.size - 1 else 0.5 * (levels[j] + levels[j + 1]) - hi
                margins[j] = min(left, right)
            self._margins[id(levels)] = margins
        self.checked = 0
        self.violations = []

    def _nearest_index(self, levels, values):
        pos = np.searchsorted(levels, values)
        lo = np.clip(pos - 1, 0, levels.size - 1)
        hi = np.clip(pos, 0, levels.size - 1)
        return np.where((levels[hi] - values) <= (values - levels[lo]), hi, lo)

    def check(self, k: int, w_before: np.ndarray, u: np.ndarray,
              w_after: np.ndarray, gamma: float) -> None:
        bound = gamma * max(self.params.m_clip, float(np.abs(u).max()))
        for levels, idx in self.grid.groups():
            margins = self._margins[id(levels)]
            before = self._nearest_index(levels, w_before[idx])
            applies = bound < 0.5 * margins[before]
            if not applies.any():
                continue
            after = self._nearest_index(levels, w_after[idx])
            moved = applies & (after != before)
            self.checked += int(applies.sum())
            for i in idx[moved]:
                self.violations.append((k, int(i)))


@dataclass
class SuiteReport:
    """Outcome of one validation suite."""

    name: str
    passed: bool
    checked: int
    failures: int
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: {self.checked} checked, {self.failures} failures{extra}"


def oracle_equivalence_suite(seed: int = 0, n_cases: int = 1000,
                             tol: float = 1e-10) -> SuiteReport:
    """Random cross-check of the closed-form direction against the QP oracle."""
    rng = rng_for(seed, 10)
    grids = [QuantGrid.binary(8), QuantGrid.uniform_int(4, 8)]
    eps_choices = [0.1, 0.3, 0.9, 0.05, 0.02]
    alpha_choices = [0.1, 1.0, 5.0]
    checked = failures = 0
    worst = 0.0
    for _ in range(n_cases):
        grid = grids[int(rng.integers(len(grids)))]
        lo, hi = grid.levels(0)[0], grid.levels(0)[-1]
        params = ConstraintParams(epsilon=float(rng.choice(eps_choices)),
                                  alpha=float(rng.choice(alpha_choices)),
                                  m_clip=1.0)
        w = rng.uniform(lo - 0.5, hi + 0.5, grid.dim)
        u = rng.normal(0.0, 2.0, grid.dim)
        step = skew_direction(params, grid, u, w)
        ref, infeasible = qp_oracle(params, grid, u, w)
        comparable = ~infeasible
        err = np.abs(step.pre_clip[comparable] - ref[comparable])
        checked += int(comparable.sum())
        failures += int((err > tol).sum())
        if err.size:
            worst = max(worst, float(err.max()))
        if not np.array_equal(np.flatnonzero(infeasible), step.midpoint_hits):
            failures += 1
    return SuiteReport("oracle-equivalence", failures == 0, checked, failures,
                       detail=f"max |diff| {worst:.3e}")


def gradient_suite(seed: int = 0, n_points: int = 100) -> SuiteReport:
    """Finite-difference checks for all three models."""
    rng = rng_for(seed, 11)
    X10 = rng.uniform(-1.0, 1.0, (64, 10))
    y10 = (rng.random(64) < 0.5).astype(np.int64)
    X2 = rng.uniform(-1.0, 1.0, (64, 2))
    y2 = (rng.random(64) < 0.5).astype(np.int64)
    cases = [
        (LogisticModel(10), X10, y10, 1e-6),
        (MoonsMlpModel(), X2, y2, 1e-5),
        (QuadraticToyModel(), None, None, 1e-6),
    ]
    checked = failures = 0
    worst = 0.0
    for model, X, y, tol in cases:
        for _ in range(n_points):
            w = rng.normal(0.0, 1.0, model.dim)
            rep = fd_check(model, w, X, y)
            if np.isnan(rep.max_rel_err):
                continue
            checked += 1
            worst = max(worst, rep.max_rel_err)
            if rep.max_rel_err > tol:
                failures += 1
    return SuiteReport("fd-gradients", failures == 0, checked, failures,
                       detail=f"max rel err {worst:.3e}")


def attraction_suite(run_fn, params: ConstraintParams, grid: QuantGrid) -> SuiteReport:
    """Run a training closure under the admissibility callback."""
    stats = {"checked": 0, "bad": 0}

    def callback(k, w, u, step, gamma):
        if step is None:
            return
        bad = attraction_violations(params, grid, u, w, step)
        stats["checked"] += step.active.size - step.midpoint_hits.size
        stats["bad"] += bad.size

    run_fn(callback)
    return SuiteReport("feasibility-attraction", stats["bad"] == 0,
                       stats["checked"], stats["bad"])


def containment_suite(run_fn, params: ConstraintParams, grid: QuantGrid) -> SuiteReport:
    """Run a training closure under the cell-containment callback."""
    checker = ContainmentChecker(params, grid)

    def callback(k, w, u, step, gamma):
        if step is not None:
            checker.check(k, w, u, w + gamma * step.v, gamma)

    run_fn(callback)
    return SuiteReport("cell-containment", not checker.violations,
                       checker.checked, len(checker.violations))
