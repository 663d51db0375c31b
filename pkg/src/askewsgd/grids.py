"""Quantization grids and smoothed interval constraints.

A grid assigns each coordinate a finite, strictly increasing set of levels.
The feasible region used during training is not the grid itself but the
union of small intervals around the levels carved out by a quartic penalty:

    penalty(w) = (w - c_j)^2 (w - c_{j+1})^2   for w in the cell [c_j, c_{j+1})

with quadratic continuations (w - c_first)^2 / (w - c_last)^2 outside the
level range.  The slack of the interval constraint is ``eps - penalty``;
a coordinate is feasible when its slack is nonnegative.  As ``eps`` shrinks,
the feasible region contracts onto the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

# Sentinel returned by cell_index left of the first level.  Above the last
# level (and exactly at it) the index K-1 is returned, one past the last
# interior cell.
CELL_BELOW = -1


class ConfigError(ValueError):
    """Invalid grid, constraint, or run configuration."""


def _is_single_vector(levels) -> bool:
    """True when ``levels`` is one flat level vector, not one per coordinate."""
    try:
        first = levels[0]
    except (TypeError, IndexError, KeyError):
        return True
    return not np.iterable(first)


def _as_levels(values) -> np.ndarray:
    levels = np.ascontiguousarray(values, dtype=float)
    if levels.ndim != 1 or levels.size < 2:
        raise ConfigError("a quantization grid needs a 1-D vector of at least two levels")
    if not np.all(np.isfinite(levels)):
        raise ConfigError("quantization levels must be finite")
    if not np.all(np.diff(levels) > 0.0):
        raise ConfigError("quantization levels must be strictly increasing")
    levels.setflags(write=False)
    return levels


class QuantGrid:
    """Per-coordinate quantization levels.

    Many coordinates may reference the same level vector (the layerwise
    case); semantics are always per-coordinate.  Grids are immutable after
    construction.

    Parameters
    ----------
    levels : array-like or sequence of array-like
        Either a single strictly increasing level vector shared by all
        ``dim`` coordinates, or one level vector per coordinate.
    dim : int, optional
        Number of coordinates.  Required when ``levels`` is a single
        shared vector; otherwise inferred.
    """

    def __init__(self, levels, dim: int | None = None):
        if _is_single_vector(levels):
            if dim is None:
                raise ConfigError("dim is required when a single shared level vector is given")
            shared = _as_levels(levels)
            per_coord = [shared] * int(dim)
        else:
            per_coord = [_as_levels(v) for v in levels]
            if dim is not None and dim != len(per_coord):
                raise ConfigError(f"dim={dim} does not match {len(per_coord)} level vectors")
        if not per_coord:
            raise ConfigError("grid must cover at least one coordinate")
        self._levels = per_coord
        self._groups = self._group_shared(per_coord)
        self.dim = len(per_coord)
        self.g_min = float(min(np.diff(v).min() for v, _ in self._groups))
        self.max_abs_level = float(max(np.abs(v).max() for v, _ in self._groups))

    @staticmethod
    def _group_shared(per_coord):
        groups: dict[int, list[int]] = {}
        arrays: dict[int, np.ndarray] = {}
        for i, v in enumerate(per_coord):
            groups.setdefault(id(v), []).append(i)
            arrays[id(v)] = v
        return [(arrays[k], np.asarray(idx, dtype=int)) for k, idx in groups.items()]

    @classmethod
    def binary(cls, dim: int) -> "QuantGrid":
        """The two-level grid {-1, +1} shared by all coordinates."""
        return cls(np.array([-1.0, 1.0]), dim=dim)

    @classmethod
    def uniform_int(cls, bits: int, dim: int) -> "QuantGrid":
        """Integer levels spanning [-2**(bits-1), 2**(bits-1)]."""
        if bits < 1:
            raise ConfigError("bits must be >= 1")
        half = 2 ** (bits - 1)
        return cls(np.arange(-half, half + 1, dtype=float), dim=dim)

    @classmethod
    def from_spec(cls, spec, dim: int) -> "QuantGrid":
        """Build a grid from a config value.

        Accepts the shorthand strings ``"binary"`` and ``"intK"`` (e.g.
        ``"int4"``), a single explicit level list shared by all coordinates,
        or one level list per coordinate.
        """
        if isinstance(spec, str):
            if spec == "binary":
                return cls.binary(dim)
            if spec.startswith("int"):
                try:
                    bits = int(spec[3:])
                except ValueError:
                    raise ConfigError(f"unknown grid shorthand: {spec!r}") from None
                return cls.uniform_int(bits, dim)
            raise ConfigError(f"unknown grid shorthand: {spec!r}")
        return cls(spec, dim=dim)

    def levels(self, i: int) -> np.ndarray:
        """Level vector of coordinate ``i`` (read-only)."""
        return self._levels[i]

    def groups(self):
        """Iterate over (level vector, coordinate indices) for shared grids."""
        return iter(self._groups)

    def __repr__(self):
        kinds = {len(v) for v, _ in self._groups}
        return f"QuantGrid(dim={self.dim}, level_counts={sorted(kinds)}, g_min={self.g_min})"


@dataclass(frozen=True)
class ConstraintParams:
    """Hyperparameters of the smoothed interval constraints.

    Attributes
    ----------
    epsilon : float
        Slack width of the intervals around each level, in (0, 1].
    alpha : float
        Pull-back strength toward the feasible region for violated
        coordinates.
    m_clip : float
        Bound on the pull-back velocity; prevents blow-up near cell
        midpoints where the slack derivative vanishes.
    boundary_tol : float or None
        Half-width used by stationarity diagnostics to treat a coordinate
        as sitting on the constraint boundary.  ``None`` selects
        ``1e-6 * epsilon``.  Diagnostics only, never used in updates.
    """

    epsilon: float = 1.0
    alpha: float = 1.0
    m_clip: float = 1.0
    boundary_tol: float | None = None

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.alpha <= 0.0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.m_clip <= 0.0:
            raise ConfigError(f"m_clip must be > 0, got {self.m_clip}")
        if self.boundary_tol is not None and self.boundary_tol < 0.0:
            raise ConfigError(f"boundary_tol must be >= 0, got {self.boundary_tol}")

    @property
    def effective_boundary_tol(self) -> float:
        return 1e-6 * self.epsilon if self.boundary_tol is None else self.boundary_tol

    def replace_epsilon(self, epsilon: float) -> "ConstraintParams":
        return ConstraintParams(epsilon=epsilon, alpha=self.alpha, m_clip=self.m_clip,
                                boundary_tol=self.boundary_tol)


def validate_params(params: ConstraintParams, grid: QuantGrid) -> None:
    """Check the slack width against the grid before an optimization run.

    Requires ``epsilon <= g_min**4 / 16`` so each coordinate's feasible set
    splits into one closed interval per level.  Raises ConfigError otherwise.
    """
    bound = grid.g_min ** 4 / 16.0
    if params.epsilon > bound:
        raise ConfigError(
            f"epsilon={params.epsilon} exceeds g_min^4/16={bound} for this grid; "
            "the feasible intervals around neighboring levels would merge"
        )


def _penalty_batch(levels: np.ndarray, omega: np.ndarray):
    """Vectorized penalty and derivative for one level vector."""
    omega = np.asarray(omega, dtype=float)
    k = levels.size
    idx = np.searchsorted(levels, omega, side="right") - 1
    below = idx < 0
    above = idx >= k - 1
    interior = ~(below | above)

    val = np.empty_like(omega)
    der = np.empty_like(omega)
    if below.any():
        d = omega[below] - levels[0]
        val[below] = d * d
        der[below] = 2.0 * d
    if above.any():
        d = omega[above] - levels[-1]
        val[above] = d * d
        der[above] = 2.0 * d
    if interior.any():
        j = idx[interior]
        d1 = omega[interior] - levels[j]
        d2 = omega[interior] - levels[j + 1]
        val[interior] = (d1 * d1) * (d2 * d2)
        der[interior] = 2.0 * d1 * d2 * (d1 + d2)
    return val, der


def cell_index(grid: QuantGrid, i: int, omega: float) -> int:
    """Index j of the cell [c_j, c_{j+1}) containing ``omega``.

    Returns ``CELL_BELOW`` (-1) left of the first level and ``K-1`` at or
    above the last level; the value at the top boundary is irrelevant to the
    penalty, which uses the quadratic continuation there.
    """
    levels = grid.levels(i)
    j = int(np.searchsorted(levels, omega, side="right")) - 1
    if j < 0:
        return CELL_BELOW
    return min(j, levels.size - 1)


def grid_penalty(grid: QuantGrid, i: int, omega: float) -> float:
    """Quartic penalty of coordinate ``i``; zero exactly at grid levels."""
    val, _ = _penalty_batch(grid.levels(i), np.asarray([omega]))
    return float(val[0])


def grid_penalty_prime(grid: QuantGrid, i: int, omega: float) -> float:
    """Derivative of :func:`grid_penalty` (same piecewise branches)."""
    _, der = _penalty_batch(grid.levels(i), np.asarray([omega]))
    return float(der[0])


def constraint_slack(params: ConstraintParams, grid: QuantGrid, i: int, omega: float) -> float:
    """Slack ``epsilon - penalty``; the coordinate is feasible when >= 0."""
    return params.epsilon - grid_penalty(grid, i, omega)


def constraint_slack_prime(params: ConstraintParams, grid: QuantGrid, i: int, omega: float) -> float:
    """Derivative of :func:`constraint_slack`."""
    return -grid_penalty_prime(grid, i, omega)


def slack_vectors(params: ConstraintParams, grid: QuantGrid, w: np.ndarray):
    """Slack and slack derivative for every coordinate of ``w``.

    Returns ``(slack, slack_prime)`` as float vectors of length ``dim``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.dim,):
        raise ValueError(f"expected weight vector of shape ({grid.dim},), got {w.shape}")
    psi = np.empty_like(w)
    dpsi = np.empty_like(w)
    for levels, idx in grid.groups():
        val, der = _penalty_batch(levels, w[idx])
        psi[idx] = params.epsilon - val
        dpsi[idx] = -der
    return psi, dpsi


def feasibility_gap(params: ConstraintParams, grid: QuantGrid, w: np.ndarray) -> float:
    """Largest constraint violation ``max_i max(0, -slack_i)``; zero iff feasible."""
    psi, _ = slack_vectors(params, grid, w)
    return float(np.maximum(0.0, -psi).max())


def project_to_grid(grid: QuantGrid, w: np.ndarray) -> np.ndarray:
    """Map each coordinate to its nearest level; exact midpoints go right."""
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.dim,):
        raise ValueError(f"expected weight vector of shape ({grid.dim},), got {w.shape}")
    out = np.empty_like(w)
    for levels, idx in grid.groups():
        pos = np.searchsorted(levels, w[idx])
        lo = np.clip(pos - 1, 0, levels.size - 1)
        hi = np.clip(pos, 0, levels.size - 1)
        take_hi = (levels[hi] - w[idx]) <= (w[idx] - levels[lo])
        out[idx] = np.where(take_hi, levels[hi], levels[lo])
    return out


def distance_to_grid(grid: QuantGrid, w: np.ndarray) -> np.ndarray:
    """Per-coordinate distance to the nearest level."""
    return np.abs(np.asarray(w, dtype=float) - project_to_grid(grid, w))


def feasible_intervals(params: ConstraintParams, grid: QuantGrid, i: int):
    """The closed feasible intervals of coordinate ``i``, one per level.

    Only defined in the disjoint regime ``epsilon <= g_min**4 / 16``
    (raises ConfigError if intervals would merge).  Outer edges follow from
    the quadratic continuations; interior edges are found by root bracketing
    of ``penalty - epsilon`` between midpoints and levels.
    """
    levels = grid.levels(i)
    eps = params.epsilon
    sq = float(np.sqrt(eps))

    def pen(x: float) -> float:
        return grid_penalty(grid, i, x) - eps

    intervals = []
    k = levels.size
    for j in range(k):
        c = levels[j]
        if j == 0:
            lo = c - sq
        else:
            mid = 0.5 * (levels[j - 1] + c)
            if pen(mid) < 0.0:
                raise ConfigError("feasible intervals merge; epsilon too large for this grid")
            lo = brentq(pen, mid, c, xtol=1e-14)
        if j == k - 1:
            hi = c + sq
        else:
            mid = 0.5 * (c + levels[j + 1])
            if pen(mid) < 0.0:
                raise ConfigError("feasible intervals merge; epsilon too large for this grid")
            hi = brentq(pen, c, mid, xtol=1e-14)
        intervals.append((float(lo), float(hi)))
    return intervals
