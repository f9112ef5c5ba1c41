"""Poisson/Dirichlet solving, maximum principles, eigenpairs, harmonic measure.

The Dirichlet problem L_u = f vol with u = g on the boundary is solved by
minimizing the energy of the reduced symmetric positive-definite system
with conjugate gradients.  Sign convention: L_u(phi) = -E(u, phi), so the
solution satisfies E(u, phi) = -int(f phi) for interior hats and the flat
model equation reads  Delta u = f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from .calculus import (
    DirichletOperator,
    PLFunction,
    _check_host,
    laplacian_vector,
)
from .exceptions import (
    BallTooLargeError,
    DomainError,
    EmptyBoundaryError,
    NotClosedError,
    SolverDivergedError,
)
from .model import FLAT_CURVATURE_EPS, generalized_sine
from .report import ExperimentReport, make_report
from .space import ConeSurface, DistanceField

CG_ITER_FACTOR = 50  # iteration cap is 50 * sqrt(unknown count)


def _as_values(space, data, name):
    if data is None:
        return np.zeros(space.n_vertices)
    if isinstance(data, PLFunction):
        _check_host(space, data)
        return data.values
    if np.isscalar(data):
        return np.full(space.n_vertices, float(data))
    arr = np.asarray(data, dtype=float)
    if arr.shape != (space.n_vertices,):
        raise DomainError(f"{name} must be scalar, PLFunction, or per-vertex array")
    return arr


def _cg(mat, rhs, tol, cap, x0=None):
    sol, info = sla.cg(mat, rhs, rtol=tol, atol=0.0, maxiter=cap, x0=x0)
    if info > 0:
        # one retry with a Jacobi preconditioner before giving up
        d = mat.diagonal()
        precond = sla.LinearOperator(mat.shape, lambda v: v / d)
        sol, info = sla.cg(mat, rhs, rtol=tol, atol=0.0, maxiter=cap, M=precond)
        if info > 0:
            raise SolverDivergedError(
                f"conjugate gradients hit the iteration cap {cap}"
            )
    if info < 0:
        raise SolverDivergedError("conjugate gradients reported invalid input")
    return sol


def solve_poisson_dirichlet(space: ConeSurface, op: DirichletOperator, f, g,
                            tol: float = 1e-10,
                            boundary_mask=None) -> PLFunction:
    """Solve L_u = f vol with Dirichlet data g on the boundary nodes.

    f and g may be PLFunctions, scalars, or per-vertex arrays (f = None
    means the harmonic case).  boundary_mask overrides the surface
    boundary to solve on sub-regions.  Conjugate gradients run to relative
    residual `tol` with cap 50 sqrt(n).
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    bmask = op.boundary if boundary_mask is None else np.asarray(boundary_mask, bool)
    if not bmask.any():
        raise EmptyBoundaryError("Dirichlet solve needs a nonempty boundary set")
    fv = _as_values(space, f, "f")
    gv = _as_values(space, g, "g")
    K = op.stiffness
    M = op.masses
    inter = ~bmask
    u = gv.copy()
    if inter.any():
        Kii = K[inter][:, inter]
        Kib = K[inter][:, bmask]
        rhs = -(M[inter] * fv[inter]) - Kib @ gv[bmask]
        cap = max(100, int(CG_ITER_FACTOR * math.sqrt(int(inter.sum()))))
        u[inter] = _cg(Kii.tocsr(), rhs, tol, cap)
    return PLFunction(space, u)


def solve_region_dirichlet(space, op, region_mask, f, g_values, tol=1e-10):
    """Dirichlet solve on a sub-region: nodes outside keep g, the region's
    node boundary is everything in the region adjacent to the outside."""
    region = np.asarray(region_mask, bool)
    if not region.any():
        raise DomainError("empty region")
    bmask = ~region | op.boundary
    return solve_poisson_dirichlet(space, op, f, g_values, tol, boundary_mask=bmask)


def check_maximum_principle(space: ConeSurface, u: PLFunction, region_mask,
                            tol: float = 1e-9) -> ExperimentReport:
    """Weak and strong maximum principle report for u on a region.

    Weak form: interior max <= boundary max + tol.  Strong form: when the
    interior max reaches the boundary max, u must be constant within tol.
    """
    _check_host(space, u)
    region = np.asarray(region_mask, bool)
    inner = region & ~space.boundary_vertex
    i, j = space.edges[:, 0], space.edges[:, 1]
    ring = np.zeros(space.n_vertices, dtype=bool)
    outside = ~region
    ring[i[outside[j]]] = True
    ring[j[outside[i]]] = True
    boundary = (region & (ring | space.boundary_vertex))
    inner = region & ~boundary
    if not inner.any() or not boundary.any():
        raise DomainError("region needs both interior and boundary nodes")
    int_max = float(u.values[inner].max())
    bd_max = float(u.values[boundary].max())
    slack = bd_max + tol - int_max
    strong_triggered = int_max >= bd_max - tol
    is_const = float(u.values[region].max() - u.values[region].min()) <= tol
    return make_report(
        "maximum_principle",
        {"interior_max": int_max, "boundary_max": bd_max},
        [slack],
        tolerance=0.0,
        meta={
            "strong_form_triggered": bool(strong_triggered),
            "constant_within_tol": bool(is_const),
            "tol": tol,
        },
    )


def supersolution_slack(op: DirichletOperator, u: PLFunction, f, hats) -> float:
    """min over hats of int(f phi) - L_u(phi); >= 0 iff u is a discrete
    supersolution of L_u = f vol against this hat family."""
    if not hats:
        raise DomainError("need at least one hat function")
    space = op.surface
    fv = _as_values(space, f, "f")
    lap = laplacian_vector(op, u)
    worst = math.inf
    for phi in hats:
        _check_host(space, phi)
        idx = np.flatnonzero(phi.values)
        val = float((op.masses * fv - lap)[idx] @ phi.values[idx])
        worst = min(worst, val)
    return worst


def first_nonzero_eigenpair(space: ConeSurface, op: DirichletOperator,
                            tol: float = 1e-8,
                            max_iter: int = 500) -> tuple[float, PLFunction]:
    """Smallest nonzero eigenvalue of K u = lambda M u on a closed surface.

    Inverse-power iteration on K + sigma M (sigma = 1e-8 trace scale
    regularizes the constant kernel) with mass-mean projection after every
    step; stops when the relative eigen-residual drops below tol.
    """
    if not space.is_closed:
        raise NotClosedError("first eigenpair needs a closed surface")
    K = op.stiffness.tocsc()
    M = op.masses
    sigma = 1e-8 * K.diagonal().sum() / space.n_vertices
    shifted = (K + sigma * sparse.diags(M)).tocsc()
    solve = sla.factorized(shifted)
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(space.n_vertices)
    total_mass = M.sum()

    def project(v):
        return v - (M @ v) / total_mass

    x = project(x)
    x /= math.sqrt(float(x @ (M * x)))
    lam = 0.0
    for _ in range(max_iter):
        y = solve(M * x)
        y = project(y)
        norm = math.sqrt(float(y @ (M * y)))
        if norm == 0.0:
            raise SolverDivergedError("inverse iteration collapsed to zero vector")
        x = y / norm
        Kx = K @ x
        lam = float(x @ Kx)  # Rayleigh quotient with M-normalized x
        resid = np.linalg.norm(Kx - lam * (M * x))
        if resid <= tol * max(np.linalg.norm(Kx), 1e-300):
            return lam, PLFunction(space, x)
    raise SolverDivergedError(
        f"inverse iteration did not reach tolerance {tol} in {max_iter} steps"
    )


def solve_closed_harmonic(space: ConeSurface, op: DirichletOperator, f=None,
                          tol: float = 1e-12, seed: int = 99) -> PLFunction:
    """Zero-mean solution of L_u = f vol on a closed surface.

    With f = 0 this converges to the zero-mean element of the stiffness
    kernel; the iteration starts from a random zero-mean vector so a
    nontrivial kernel would be detected.
    """
    if not space.is_closed:
        raise NotClosedError("closed-surface solve needs a closed surface")
    fv = _as_values(space, f, "f")
    M = op.masses
    if abs(float(M @ fv)) > 1e-8 * float(M.sum()) * (np.abs(fv).max() + 1e-30):
        raise DomainError("right-hand side must have zero mean on a closed surface")
    K = op.stiffness
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(space.n_vertices)
    x0 -= (M @ x0) / M.sum()
    rhs = -(M * fv)
    cap = max(200, int(CG_ITER_FACTOR * math.sqrt(space.n_vertices)))
    scale = max(np.linalg.norm(rhs), 1e-6)
    sol, info = sla.cg(K, rhs, x0=x0, rtol=0.0, atol=1e-14 * scale, maxiter=cap)
    if info != 0:
        sol, info = sla.cg(K, rhs, x0=x0, rtol=0.0, atol=1e-12 * scale, maxiter=3 * cap)
        if info != 0:
            raise SolverDivergedError("closed-surface CG did not converge")
    sol -= (M @ sol) / M.sum()
    return PLFunction(space, sol)


@dataclass
class HarmonicMeasure:
    """Radial harmonic-measure structure at a center p.

    Holds the radii grid, the ball node sets, and the generalized-sine
    weights; mu samples are produced per boundary function by hm_integrate.
    """

    space: ConeSurface
    op: DirichletOperator
    center: int
    radius: float
    radii: np.ndarray
    weights: np.ndarray
    balls: list[np.ndarray]
    k: float
    mu: np.ndarray | None = None
    solver_tol: float = 1e-10

    def mu_samples(self, phi: PLFunction) -> np.ndarray:
        """u_r(p) for each grid radius: harmonic extension of phi into B_p(r)."""
        _check_host(self.space, phi)
        out = np.empty(len(self.radii))
        for idx, region in enumerate(self.balls):
            u = solve_region_dirichlet(
                self.space, self.op, region, None, phi.values, self.solver_tol
            )
            out[idx] = u.values[self.center]
        self.mu = out
        return out


def harmonic_measure(space: ConeSurface, op: DirichletOperator, p: int,
                     R: float, m: int, dist_field: DistanceField,
                     solver_tol: float = 1e-10) -> HarmonicMeasure:
    """Prepare the harmonic measure nu_{p,R} on a uniform m-point radii grid.

    Each ball is the node sub-mesh {dist <= r}; the measure weights are
    s_k^{n-1}(r) with k the surface's declared curvature bound (n = 2).
    """
    if m < 8:
        raise DomainError("harmonic measure grid needs m >= 8")
    if dist_field.source != p:
        raise DomainError("distance field must be centered at p")
    d = dist_field.vertex_dist
    interior_reach = d[space.boundary_vertex].min() if not space.is_closed else math.inf
    if R >= interior_reach:
        raise BallTooLargeError(
            f"B_p({R}) touches the domain boundary (reach {interior_reach:.4g})"
        )
    radii = np.linspace(R / m, R, m)
    k = space.declared_k
    weights = np.asarray([generalized_sine(k, r) for r in radii])
    balls = []
    for r in radii:
        region = d <= r
        if region.sum() < 4 or not (d[region] > 0).any():
            raise DomainError(f"ball of radius {r} is below mesh resolution")
        balls.append(region)
    return HarmonicMeasure(space, op, p, R, radii, weights, balls, k)


def hm_integrate(hm: HarmonicMeasure, phi: PLFunction) -> float:
    """Weighted trapezoidal quotient int s^{n-1} mu / int s^{n-1}."""
    mu = hm.mu_samples(phi)
    num = np.trapezoid(hm.weights * mu, hm.radii)
    den = np.trapezoid(hm.weights, hm.radii)
    return float(num / den)
