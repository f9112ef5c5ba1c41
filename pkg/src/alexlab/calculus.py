"""Piecewise-linear calculus on cone surfaces.

PL functions carry one value per mesh vertex.  Gradients are constant per
face (computed in the face's intrinsic chart), the energy form uses cotan
edge weights with lumped vertex masses, and the distributional Laplacian
is the functional phi -> -E(u, phi) evaluated against hat functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .exceptions import DomainError, EmptyBoundaryError
from .report import ExperimentReport, make_report
from .space import ConeSurface, DistanceField, _sublevel_fraction


@dataclass
class PLFunction:
    """Vertex-sampled piecewise-linear function on a host surface."""

    surface: ConeSurface
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.surface.n_vertices,):
            raise DomainError(
                f"value count {self.values.shape} does not match host vertex count"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("PL function values must be finite")

    @classmethod
    def from_vertex_values(cls, surface, values):
        return cls(surface, np.asarray(values, dtype=float))

    @classmethod
    def constant(cls, surface, c):
        return cls(surface, np.full(surface.n_vertices, float(c)))

    @classmethod
    def from_embedding(cls, surface, fn):
        """Sample a callable of the embedding coordinates at each vertex."""
        if surface.embedding is None:
            raise DomainError("surface has no embedding coordinates")
        vals = np.asarray([fn(*xy) for xy in surface.embedding], dtype=float)
        return cls(surface, vals)


@dataclass
class GradientField:
    """Per-face constant gradients plus a vertex |grad|^2 representative."""

    surface: ConeSurface
    face_grad: np.ndarray      # (F, 2) in each face's own chart
    face_sq: np.ndarray        # (F,) |grad|^2 per face
    vertex_sq: np.ndarray      # (V,) area-weighted average of incident faces


def _check_host(surface, *fns):
    for fn in fns:
        if fn.surface is not surface:
            raise DomainError("PL function is hosted on a different surface")


def face_gradient(space: ConeSurface, u: PLFunction) -> GradientField:
    """Constant per-face gradient of the affine interpolant of u.

    The vertex |grad u|^2 field is the area-weighted average of the
    incident face values (one admissible pointwise representative).
    """
    _check_host(space, u)
    ch = space.charts()           # (F, 3, 2)
    vals = u.values[space.faces]  # (F, 3)
    # solve the 2x2 affine systems: grad . (p1 - p0) = u1 - u0, etc.
    e1 = ch[:, 1] - ch[:, 0]
    e2 = ch[:, 2] - ch[:, 0]
    b1 = vals[:, 1] - vals[:, 0]
    b2 = vals[:, 2] - vals[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    gx = (b1 * e2[:, 1] - b2 * e1[:, 1]) / det
    gy = (-b1 * e2[:, 0] + b2 * e1[:, 0]) / det
    grad = np.stack([gx, gy], axis=1)
    face_sq = gx * gx + gy * gy
    wsum = np.zeros(space.n_vertices)
    acc = np.zeros(space.n_vertices)
    np.add.at(wsum, space.faces.ravel(), np.repeat(space.face_area, 3))
    np.add.at(acc, space.faces.ravel(), np.repeat(space.face_area * face_sq, 3))
    vertex_sq = acc / np.maximum(wsum, 1e-300)
    return GradientField(space, grad, face_sq, vertex_sq)


def face_inner(space: ConeSurface, gu: GradientField, gv: GradientField) -> np.ndarray:
    """Per-face <grad u, grad v> (both fields share the same charts)."""
    return np.einsum("fi,fi->f", gu.face_grad, gv.face_grad)


def vertex_average(space: ConeSurface, face_values: np.ndarray) -> np.ndarray:
    """Area-weighted average of a per-face quantity onto vertices."""
    wsum = np.zeros(space.n_vertices)
    acc = np.zeros(space.n_vertices)
    np.add.at(wsum, space.faces.ravel(), np.repeat(space.face_area, 3))
    np.add.at(acc, space.faces.ravel(), np.repeat(space.face_area * face_values, 3))
    return acc / np.maximum(wsum, 1e-300)


def pointwise_lip(space: ConeSurface, u: PLFunction, x: int) -> float:
    """Discrete pointwise Lipschitz surrogate: max slope over incident edges."""
    _check_host(space, u)
    best = 0.0
    for e, (i, j) in enumerate(space.edges):
        if i == x or j == x:
            slope = abs(u.values[i] - u.values[j]) / space.edge_lengths[e]
            best = max(best, slope)
    return best


def lip_field(space: ConeSurface, u: PLFunction) -> np.ndarray:
    """pointwise_lip at every vertex, vectorized."""
    _check_host(space, u)
    i, j = space.edges[:, 0], space.edges[:, 1]
    slope = np.abs(u.values[i] - u.values[j]) / space.edge_lengths
    out = np.zeros(space.n_vertices)
    np.maximum.at(out, i, slope)
    np.maximum.at(out, j, slope)
    return out


@dataclass
class DirichletOperator:
    """Cotan stiffness, lumped masses, and the boundary node set."""

    surface: ConeSurface
    stiffness: sparse.csr_matrix
    masses: np.ndarray
    boundary: np.ndarray  # bool per vertex

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary


def assemble_operator(space: ConeSurface) -> DirichletOperator:
    """Cotan-weight stiffness matrix and one-third lumped vertex areas.

    Row sums of the stiffness vanish (constants are in the kernel);
    negative weights from obtuse triangles are kept as-is.
    """
    F = space.n_faces
    rows, cols, vals = [], [], []
    ang = space.corner_angle
    faces = space.faces
    for s in range(3):
        # side s is opposite corner s; its cotan weight couples the side's ends
        u = faces[:, (s + 1) % 3]
        v = faces[:, (s + 2) % 3]
        w = 0.5 / np.tan(ang[:, s])
        rows.extend([u, v, u, v])
        cols.extend([v, u, u, v])
        vals.extend([-w, -w, w, w])
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.n_vertices, space.n_vertices),
    ).tocsr()
    return DirichletOperator(
        surface=space,
        stiffness=mat,
        masses=space.vertex_masses(),
        boundary=space.boundary_vertex.copy(),
    )


def dirichlet_form(op: DirichletOperator, u: PLFunction, v: PLFunction) -> float:
    """Energy E(u, v) = sum of cotan-weighted edge products."""
    _check_host(op.surface, u, v)
    return float(u.values @ (op.stiffness @ v.values))


def laplacian_functional(op: DirichletOperator, u: PLFunction, phi: PLFunction) -> float:
    """L_u(phi) = -E(u, phi) for a test function vanishing on the boundary."""
    _check_host(op.surface, u, phi)
    if np.any(phi.values[op.boundary] != 0.0):
        raise DomainError("test function must vanish on boundary nodes")
    return -dirichlet_form(op, u, phi)


def laplacian_vector(op: DirichletOperator, u: PLFunction) -> np.ndarray:
    """L_u against every vertex hat at once: -(K u)_i per vertex."""
    _check_host(op.surface, u)
    return -(op.stiffness @ u.values)


def hat_functions(space: ConeSurface, region) -> list[PLFunction]:
    """One nonnegative hat per interior vertex of the region.

    region is a boolean vertex mask (or a predicate on vertex ids); hats
    are 1 at their vertex and 0 elsewhere, so each lies in the Lipschitz
    functions of compact support inside the region.
    """
    mask = _region_mask(space, region)
    ids = interior_region_vertices(space, mask)
    if len(ids) == 0:
        raise DomainError("region has empty interior")
    hats = []
    for i in ids:
        vals = np.zeros(space.n_vertices)
        vals[i] = 1.0
        hats.append(PLFunction(space, vals))
    return hats


def _region_mask(space, region):
    if callable(region):
        return np.asarray([bool(region(v)) for v in range(space.n_vertices)])
    mask = np.asarray(region, dtype=bool)
    if mask.shape != (space.n_vertices,):
        raise DomainError("region mask must have one entry per vertex")
    return mask


def interior_region_vertices(space: ConeSurface, mask) -> np.ndarray:
    """Vertices of the region whose whole edge star stays inside it."""
    mask = _region_mask(space, mask)
    ok = mask & ~space.boundary_vertex
    i, j = space.edges[:, 0], space.edges[:, 1]
    bad = np.zeros(space.n_vertices, dtype=bool)
    outside = ~mask
    bad[i[outside[j]]] = True
    bad[j[outside[i]]] = True
    return np.flatnonzero(ok & ~bad)


def integrate(op: DirichletOperator, u: PLFunction) -> float:
    """Lumped-mass integral of a PL function."""
    _check_host(op.surface, u)
    return float(op.masses @ u.values)


def shell_integral(space: ConeSurface, field: DistanceField, u: PLFunction,
                   r: float, eps: float) -> float:
    """Thin-shell surrogate of the sphere integral of u at radius r.

    (1/2 eps) * integral of u over {r - eps < dist <= r + eps} with lumped
    vertex masses.  Raises DomainError when the shell contains no vertex.
    """
    _check_host(space, u)
    if not 0 < eps < r:
        raise DomainError(f"need 0 < eps < r, got eps={eps}, r={r}")
    d = field.vertex_dist
    sel = (d > r - eps) & (d <= r + eps)
    if not np.any(sel):
        raise DomainError(f"shell at r={r}, eps={eps} contains no vertex")
    masses = space.vertex_masses()
    return float(masses[sel] @ u.values[sel]) / (2 * eps)


def shell_average(space: ConeSurface, field: DistanceField, u: PLFunction,
                  r: float, eps: float) -> float:
    """Mass-weighted mean of u over the thin shell (bias-cancelling ratio)."""
    one = PLFunction.constant(space, 1.0)
    return shell_integral(space, field, u, r, eps) / shell_integral(
        space, field, one, r, eps
    )


def ball_integral(space: ConeSurface, field: DistanceField, u: PLFunction,
                  r: float, exclude_source: bool = False) -> float:
    """Lumped integral of u over the metric ball {dist <= r}."""
    _check_host(space, u)
    d = field.vertex_dist
    sel = d <= r
    if exclude_source:
        sel = sel.copy()
        sel[field.source] = False
    masses = space.vertex_masses()
    return float(masses[sel] @ u.values[sel])


def green_identity_check(space: ConeSurface, op: DirichletOperator, p: int,
                         inner_r: float, outer_r: float, v: PLFunction,
                         phi_radial, phi_radial_deriv, field: DistanceField,
                         rel_tol: float = 0.05) -> ExperimentReport:
    """Annulus flux identity for a radial function w = phi(dist_p).

    Compares I_{w,A}(v) = E(w, v eta) + sum v L_w(hat) over the annulus
    against phi'(R) * shell(v, R) - phi'(r) * shell(v, r).  The report
    records both sides and their mismatch as slack.
    """
    _check_host(space, v)
    if inner_r >= outer_r:
        raise DomainError("need inner_r < outer_r")
    d = field.vertex_dist
    eps = 2 * space.mesh_h
    ann = (d > inner_r) & (d < outer_r)
    if not np.any(ann):
        raise DomainError("annulus contains no vertex")
    w = PLFunction(space, np.asarray([phi_radial(max(x, 1e-12)) for x in d]))
    # I_{w,A}(v): gradient part over faces inside the annulus plus the
    # measure part against hats at annulus vertices
    gw = face_gradient(space, w)
    gv = face_gradient(space, v)
    centroid_d = d[space.faces].mean(axis=1)
    fsel = (centroid_d > inner_r) & (centroid_d < outer_r)
    grad_part = float(np.sum(space.face_area[fsel] * face_inner(space, gw, gv)[fsel]))
    lw = laplacian_vector(op, w)
    measure_part = float(v.values[ann] @ lw[ann])
    lhs = grad_part + measure_part
    rhs = phi_radial_deriv(outer_r) * shell_integral(space, field, v, outer_r, eps) - \
        phi_radial_deriv(inner_r) * shell_integral(space, field, v, inner_r, eps)
    scale = max(abs(lhs), abs(rhs), 1.0)
    slack = rel_tol - abs(lhs - rhs) / scale
    return make_report(
        "green_identity",
        {"p": p, "inner_r": inner_r, "outer_r": outer_r, "eps": eps},
        [slack],
        tolerance=0.0,
        fitted={"lhs": lhs, "rhs": rhs},
        meta={"relative_mismatch": abs(lhs - rhs) / scale, "rel_tol": rel_tol},
    )


def region_ball(space: ConeSurface, field: DistanceField, r: float) -> np.ndarray:
    """Boolean vertex mask of the metric ball {dist <= r}."""
    return field.vertex_dist <= r
