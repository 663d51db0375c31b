"""Skewed descent directions for the smoothed interval constraints.

Given a gradient estimate ``u`` at a point ``w``, the update direction is
the closest point to ``-u`` inside the polyhedron of admissible velocities

    V = { v : v_i * slack'_i >= -alpha * slack_i  for every active i },

where a coordinate is active when its slack is nonpositive.  The constraint
system is coordinate-separable, so the minimizer has a per-coordinate closed
form; violated coordinates get pulled back toward their feasible interval
with a velocity clipped at ``m_clip``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import ConstraintParams, QuantGrid, slack_vectors


@dataclass(frozen=True)
class SkewStep:
    """Result of one direction computation.

    ``v`` is the clipped update direction.  ``pre_clip`` holds the direction
    before clipping (equal to ``v`` wherever ``clipped`` is False and at
    midpoint hits, where no finite pre-clip value exists).  ``lambdas`` are
    the approximate multipliers ``(v_i + u_i) / slack'_i`` of active
    non-midpoint coordinates, zero elsewhere; for clipped coordinates they
    are computed from the clipped value and only kept for logging.
    """

    v: np.ndarray
    pre_clip: np.ndarray
    active: np.ndarray
    lambdas: np.ndarray
    clipped: np.ndarray
    midpoint_hits: np.ndarray


def active_set(params: ConstraintParams, grid: QuantGrid, w: np.ndarray) -> np.ndarray:
    """Indices of coordinates whose slack is nonpositive."""
    psi, _ = slack_vectors(params, grid, w)
    return np.flatnonzero(psi <= 0.0)


def skew_direction(params: ConstraintParams, grid: QuantGrid,
                   u: np.ndarray, w: np.ndarray) -> SkewStep:
    """Closed-form minimizer of ``0.5 * ||v + u||^2`` over admissible velocities.

    Per coordinate: inactive coordinates, and active ones for which ``-u``
    already satisfies the velocity constraint, keep ``v_i = -u_i``.  The
    remaining active coordinates take the boundary value
    ``-alpha * slack_i / slack'_i`` clipped at ``m_clip``.  A coordinate
    sitting exactly on a cell midpoint (zero slack derivative while
    infeasible) has an empty constraint; by convention it moves right at
    ``+m_clip``.
    """
    u = np.asarray(u, dtype=float)
    psi, dpsi = slack_vectors(params, grid, w)
    alpha, m_clip = params.alpha, params.m_clip

    act = psi <= 0.0
    midpoint = act & (dpsi == 0.0)
    pulled = act & ~midpoint & ~(-dpsi * u >= -alpha * psi)

    v = -u.copy()
    pre_clip = -u.copy()
    clipped = np.zeros(u.shape, dtype=bool)
    lambdas = np.zeros_like(u)

    if pulled.any():
        raw = -alpha * psi[pulled] / dpsi[pulled]
        pre_clip[pulled] = raw
        over = np.abs(raw) > m_clip
        v[pulled] = np.where(over, m_clip * np.sign(raw), raw)
        clipped[pulled] = over
    if midpoint.any():
        v[midpoint] = m_clip
        pre_clip[midpoint] = m_clip

    keep = act & ~midpoint
    lambdas[keep] = (v[keep] + u[keep]) / dpsi[keep]

    return SkewStep(v=v, pre_clip=pre_clip, active=np.flatnonzero(act),
                    lambdas=lambdas, clipped=clipped,
                    midpoint_hits=np.flatnonzero(midpoint))


def qp_oracle(params: ConstraintParams, grid: QuantGrid,
              u: np.ndarray, w: np.ndarray):
    """Reference solver for the same velocity problem, used to cross-check.

    Exploits separability directly: each active coordinate is the projection
    of ``-u_i`` onto the feasible half-line ``v * slack' >= -alpha * slack``;
    inactive coordinates return ``-u_i``.  No clipping is applied.
    Coordinates with zero slack derivative while infeasible have an empty
    constraint set and are declined (marked infeasible, value NaN).

    Returns ``(v, infeasible)`` with ``infeasible`` a boolean mask.
    """
    u = np.asarray(u, dtype=float)
    psi, dpsi = slack_vectors(params, grid, w)
    alpha = params.alpha

    v = -u.copy()
    infeasible = np.zeros(u.shape, dtype=bool)
    act = psi <= 0.0
    for i in np.flatnonzero(act):
        if dpsi[i] == 0.0:
            infeasible[i] = True
            v[i] = np.nan
            continue
        bound = -alpha * psi[i] / dpsi[i]
        if dpsi[i] > 0.0:
            v[i] = max(-u[i], bound)
        else:
            v[i] = min(-u[i], bound)
    return v, infeasible


def kkt_residual(params: ConstraintParams, grid: QuantGrid,
                 full_grad: np.ndarray, w: np.ndarray,
                 boundary_tol: float | None = None) -> float:
    """Stationarity residual for the constrained problem at ``w``.

    Interior coordinates must have zero gradient; boundary coordinates
    (|slack| within tolerance) must have the gradient aligned with the slack
    derivative so the gradient lies in the normal cone with a nonnegative
    multiplier; infeasible coordinates additionally pay their violation.
    Returns the largest per-coordinate residual.
    """
    g = np.asarray(full_grad, dtype=float)
    psi, dpsi = slack_vectors(params, grid, w)
    tol = params.effective_boundary_tol if boundary_tol is None else boundary_tol

    r = np.abs(g).astype(float)
    on_boundary = np.abs(psi) <= tol
    aligned = (np.sign(g) == np.sign(dpsi)) | (g == 0.0)
    r[on_boundary & aligned] = 0.0
    outside = psi < -tol
    r[outside] += -psi[outside]
    return float(r.max())
