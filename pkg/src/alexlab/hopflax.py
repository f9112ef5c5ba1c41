"""Hopf-Lax infimal convolution Q_t u and its audits.

Q_t u(x) = min over nodes y of u(y) + d(x, y)^2 / (2t), with d the
Steiner-graph distance.  The minimum is pruned to the ball
d <= sqrt(2 t (u(x) - min u)): any y improving on the y = x candidate
satisfies d^2 <= 2t (u(x) - u(y)), so this ball contains every minimizer
and the pruned value equals the min over the larger sqrt(4 t osc u) ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import PLFunction, _check_host, face_gradient, lip_field
from .exceptions import DomainError
from .report import ExperimentReport, make_report
from .space import ConeSurface, DistanceCache

PRUNE_PAD = 1e-9  # absolute padding on the pruning radius (float safety)


@dataclass
class HopfLaxResult:
    """Q_t u values, foot points, and the distances to them."""

    surface: ConeSurface
    t: float
    values: np.ndarray
    foot: np.ndarray        # vertex id of the minimizer, smallest id on ties
    foot_dist: np.ndarray   # graph distance to the foot point
    prune_radius: float     # largest per-node pruning radius used

    def as_plfunction(self) -> PLFunction:
        return PLFunction(self.surface, self.values)


def hopf_lax(space: ConeSurface, cache: DistanceCache, u: PLFunction,
             t: float, chunk: int = 256) -> HopfLaxResult:
    """Evaluate Q_t u at every vertex.

    Sources are processed in descending-u chunks so each dijkstra sweep
    uses the tightest admissible pruning radius for its chunk.
    """
    _check_host(space, u)
    if t <= 0:
        raise DomainError(f"Hopf-Lax needs t > 0, got {t}")
    uv = u.values
    umin = float(uv.min())
    V = space.n_vertices
    values = np.empty(V)
    foot = np.empty(V, dtype=np.int64)
    fdist = np.empty(V)
    order = np.argsort(-uv, kind="stable")
    max_radius = 0.0
    for lo in range(0, V, chunk):
        idx = order[lo : lo + chunk]
        radius = math.sqrt(max(2.0 * t * (float(uv[idx[0]]) - umin), 0.0)) + PRUNE_PAD
        max_radius = max(max_radius, radius)
        d = cache.vertex_block(idx, limit=radius)
        cand = uv[None, :] + d * d / (2.0 * t)
        best = np.argmin(cand, axis=1)
        rows = np.arange(len(idx))
        values[idx] = cand[rows, best]
        foot[idx] = best
        fdist[idx] = d[rows, best]
    return HopfLaxResult(space, t, values, foot, fdist, max_radius)


def interior_margin_mask(space: ConeSurface, cache: DistanceCache,
                         margin: float) -> np.ndarray:
    """Vertices farther than `margin` from the surface boundary."""
    if space.is_closed:
        return np.ones(space.n_vertices, dtype=bool)
    bvs = np.flatnonzero(space.boundary_vertex)
    d = cache.vertex_block(bvs, limit=margin * 1.001).min(axis=0)
    return d > margin


def semigroup_audit(space: ConeSurface, cache: DistanceCache, u: PLFunction,
                    t_grid, derivative_tol: float | None = None) -> ExperimentReport:
    """Monotonicity in t, the quantitative decay bound, and the derivative law.

    Checks, on nodes at distance > t_max Lip(u) + 3h from the boundary:
    exact monotone decrease of t -> u_t; the two-sided bound
    0 <= u_t - u_{t+s} <= (s/2) Lip^2(u_t); and the finite-difference
    derivative (u_{t+s} - u_t)/s against -|grad u_t|^2 / 2.
    """
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] <= 0:
        raise DomainError("t grid must be positive and nonempty")
    results = {t: hopf_lax(space, cache, u, t) for t in t_grid}
    lip_u = lip_field(space, u).max()
    margin = t_grid[-1] * lip_u + 3 * space.mesh_h
    inner = interior_margin_mask(space, cache, margin)
    if not inner.any():
        raise DomainError("no interior nodes survive the boundary margin")
    if derivative_tol is None:
        derivative_tol = space.mesh_h + 0.25 * (t_grid[-1] - t_grid[0])

    mono_slack = math.inf
    bound_slack = math.inf
    deriv_slack = math.inf
    deriv_errs = []
    for t1, t2 in zip(t_grid[:-1], t_grid[1:]):
        s = t2 - t1
        a, b = results[t1].values, results[t2].values
        decay = a[inner] - b[inner]
        mono_slack = min(mono_slack, float(decay.min()))
        lip_t = float(lip_field(space, results[t1].as_plfunction())[inner].max())
        # the discrete decay can overshoot the continuum bound by one mesh
        # quantum of movement; budget it explicitly
        bound_tol = 0.5 * space.mesh_h * lip_t**2
        bound_slack = min(
            bound_slack, float((0.5 * s * lip_t**2 + bound_tol - decay).min())
        )
        grad_sq = face_gradient(space, results[t1].as_plfunction()).vertex_sq
        fd = (b[inner] - a[inner]) / s
        err = np.abs(fd + 0.5 * grad_sq[inner])
        deriv_errs.append(float(err.max()))
        deriv_slack = min(deriv_slack, float(derivative_tol - err.max()))
    return make_report(
        "semigroup_audit",
        {"t_grid": t_grid, "margin": margin, "nodes": int(inner.sum())},
        [mono_slack, bound_slack, deriv_slack],
        tolerance=1e-12,
        fitted={"max_derivative_error": max(deriv_errs)},
        meta={"derivative_tol": derivative_tol, "lip_u": lip_u},
    )


def footpoint_audit(space: ConeSurface, cache: DistanceCache,
                    result: HopfLaxResult, u: PLFunction,
                    identity_tol: float | None = None,
                    sandwich_tol: float | None = None) -> ExperimentReport:
    """Foot-point identity |x F_t(x)| = t |grad u_t(x)| and the slope sandwich.

    Audited on nodes at distance > sqrt(4 t osc u) from the boundary.
    The sandwich compares |grad u_t(x)| against the descending slope of u
    at F_t(x) from below and the pointwise Lipschitz constant from above.
    """
    _check_host(space, u)
    t = result.t
    osc = float(u.values.max() - u.values.min())
    margin = math.sqrt(4.0 * t * osc)
    inner = interior_margin_mask(space, cache, margin)
    if not inner.any():
        raise DomainError("no interior nodes survive the boundary margin")
    if identity_tol is None:
        identity_tol = 4 * space.mesh_h
    if sandwich_tol is None:
        sandwich_tol = 6 * space.mesh_h

    grad_t = np.sqrt(face_gradient(space, result.as_plfunction()).vertex_sq)
    ids = np.flatnonzero(inner)
    identity_err = np.abs(result.foot_dist[ids] - t * grad_t[ids])
    scale = np.maximum(t * grad_t[ids], space.mesh_h)
    rel_err = identity_err / scale

    lip_u = lip_field(space, u)
    desc = descent_slope_field(space, u)
    feet = result.foot[ids]
    lower_slack = float((grad_t[ids] - desc[feet] + sandwich_tol).min())
    upper_slack = float((lip_u[feet] - grad_t[ids] + sandwich_tol).min())
    identity_slack = float(identity_tol - identity_err.max())
    return make_report(
        "footpoint_audit",
        {"t": t, "margin": margin, "nodes": int(inner.sum())},
        [identity_slack, lower_slack, upper_slack],
        tolerance=0.0,
        fitted={
            "max_identity_error": float(identity_err.max()),
            "max_relative_identity_error": float(rel_err.max()),
        },
        meta={"identity_tol": identity_tol, "sandwich_tol": sandwich_tol},
    )


def descent_slope_field(space: ConeSurface, u: PLFunction) -> np.ndarray:
    """Discrete subgradient norm: max over edges of (u(x) - u(y))_+ / len."""
    _check_host(space, u)
    i, j = space.edges[:, 0], space.edges[:, 1]
    diff = (u.values[i] - u.values[j]) / space.edge_lengths
    out = np.zeros(space.n_vertices)
    np.maximum.at(out, i, np.maximum(diff, 0.0))
    np.maximum.at(out, j, np.maximum(-diff, 0.0))
    return out
