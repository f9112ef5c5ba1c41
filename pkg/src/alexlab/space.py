"""Polyhedral cone surfaces and their geodesic distance machinery.

A surface is a set of Euclidean triangles glued along edges of equal
length.  Geometry is intrinsic: faces plus per-edge lengths; embedding
coordinates are optional metadata produced by the generators.  Geodesic
distances are approximated by shortest paths on a Steiner-refined graph
(edge subdivision plus in-face crossing edges), which overestimates the
true distance by O(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .exceptions import (
    DisconnectedError,
    DomainError,
    InconsistentGluingError,
    MeshFormatError,
    TriangleInequalityError,
    UnreachableError,
)
from .model import comparison_angle

# Interior vertices whose cone angle deviates from 2 pi by more than this
# are singular; generators of flat meshes must stay below it.
SINGULAR_ANGLE_TOL = 1e-9

# Frozen regression constant: graph distances on generated meshes were
# measured to overestimate geodesics by less than this multiple of the
# Steiner spacing (see test_space.py refinement checks).
DISTANCE_ERROR_FACTOR = 2.0


def _canon(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


class ConeSurface:
    """Triangulated polyhedral metric surface with cone singularities.

    Construct via :func:`build_surface` or one of the generators; the
    constructor assumes pre-validated inputs.
    """

    def __init__(self, n_vertices, faces, edge_lengths, declared_k=0.0,
                 embedding=None, mesh_h=None):
        self.n_vertices = int(n_vertices)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.declared_k = float(declared_k)
        self.embedding = None if embedding is None else np.asarray(embedding, float)

        # canonical edge table
        edge_index: dict[tuple[int, int], int] = {}
        lengths = []
        for (i, j), lij in edge_lengths.items():
            edge_index[_canon(i, j)] = len(lengths)
            lengths.append(float(lij))
        self.edge_index = edge_index
        self.edge_lengths = np.asarray(lengths, dtype=float)
        self.edges = np.empty((len(lengths), 2), dtype=np.int64)
        for (i, j), e in edge_index.items():
            self.edges[e] = (i, j)

        F = len(self.faces)
        # side s of face f is opposite local vertex s
        self.face_edge = np.empty((F, 3), dtype=np.int64)
        self.face_side_len = np.empty((F, 3), dtype=float)
        for f, (a, b, c) in enumerate(self.faces):
            for s, (u, v) in enumerate(((b, c), (c, a), (a, b))):
                e = edge_index[_canon(u, v)]
                self.face_edge[f, s] = e
                self.face_side_len[f, s] = self.edge_lengths[e]

        l0, l1, l2 = (self.face_side_len[:, s] for s in range(3))
        self.corner_angle = np.stack(
            [
                _angle_from_sides(l0, l1, l2),
                _angle_from_sides(l1, l2, l0),
                _angle_from_sides(l2, l0, l1),
            ],
            axis=1,
        )
        s = 0.5 * (l0 + l1 + l2)
        self.face_area = np.sqrt(
            np.maximum(s * (s - l0) * (s - l1) * (s - l2), 0.0)
        )

        # edge -> incident faces
        edge_faces: list[list[int]] = [[] for _ in range(len(lengths))]
        for f in range(F):
            for s in range(3):
                edge_faces[self.face_edge[f, s]].append(f)
        self.edge_faces = edge_faces
        self.boundary_edges = np.asarray(
            [e for e, fs in enumerate(edge_faces) if len(fs) == 1], dtype=np.int64
        )
        bmask = np.zeros(self.n_vertices, dtype=bool)
        for e in self.boundary_edges:
            bmask[self.edges[e]] = True
        self.boundary_vertex = bmask

        self.cone_angle = np.zeros(self.n_vertices)
        np.add.at(self.cone_angle, self.faces.ravel(), self.corner_angle.ravel())

        interior = ~bmask
        self.singular_vertices = np.flatnonzero(
            interior & (np.abs(self.cone_angle - 2 * math.pi) > SINGULAR_ANGLE_TOL)
        )

        self.mesh_h = float(mesh_h) if mesh_h else float(np.mean(self.edge_lengths))
        self.k_certified = bool(
            abs(self.declared_k) < 1e-12
            and np.all(self.cone_angle[interior] <= 2 * math.pi + SINGULAR_ANGLE_TOL)
        )
        self._charts = None
        self._graphs: dict[float, _SteinerGraph] = {}
        self._fans: dict[int, _VertexFan] = {}

    # -- derived geometry ----------------------------------------------------

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    @property
    def total_area(self) -> float:
        return float(self.face_area.sum())

    def charts(self) -> np.ndarray:
        """Per-face 2D coordinates (F, 3, 2) laid out from side lengths."""
        if self._charts is None:
            l0 = self.face_side_len[:, 0]
            l1 = self.face_side_len[:, 1]
            l2 = self.face_side_len[:, 2]
            x2 = (l2**2 + l1**2 - l0**2) / (2 * l2)
            y2 = np.sqrt(np.maximum(l1**2 - x2**2, 0.0))
            ch = np.zeros((self.n_faces, 3, 2))
            ch[:, 1, 0] = l2
            ch[:, 2, 0] = x2
            ch[:, 2, 1] = y2
            self._charts = ch
        return self._charts

    def vertex_masses(self) -> np.ndarray:
        """Lumped vertex measures: one third of incident face areas."""
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.faces.ravel(), np.repeat(self.face_area / 3.0, 3))
        return m

    def graph(self, h: float) -> "_SteinerGraph":
        key = round(float(h), 12)
        g = self._graphs.get(key)
        if g is None:
            g = _SteinerGraph(self, float(h))
            self._graphs[key] = g
        return g

    def fan(self, p: int) -> "_VertexFan":
        f = self._fans.get(p)
        if f is None:
            f = _VertexFan(self, p)
            self._fans[p] = f
        return f

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces


def _angle_from_sides(opp, a, b):
    """Corner angle opposite side `opp` in a Euclidean triangle (a, b, opp)."""
    c = (a**2 + b**2 - opp**2) / (2 * a * b)
    return np.arccos(np.clip(c, -1.0, 1.0))


def build_surface(faces, edge_lengths, declared_k=0.0, embedding=None,
                  mesh_h=None) -> ConeSurface:
    """Validate raw face/edge data and assemble a ConeSurface.

    edge_lengths may be a dict {(i, j): L} or an iterable of (i, j, L)
    records; duplicate records must agree to 1e-9 relative or the gluing
    is rejected.
    """
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise DomainError("faces must be an (F, 3) array of vertex ids")
    if len(faces) == 0:
        raise DomainError("a surface needs at least one face")
    n_vertices = int(faces.max()) + 1

    table: dict[tuple[int, int], float] = {}
    records = edge_lengths.items() if isinstance(edge_lengths, dict) else (
        ((i, j), l) for i, j, l in edge_lengths
    )
    for (i, j), lij in records:
        if i == j:
            raise InconsistentGluingError(f"degenerate edge ({i}, {j})")
        lij = float(lij)
        if not math.isfinite(lij) or lij <= 0:
            raise DomainError(f"edge ({i}, {j}) has invalid length {lij}")
        key = _canon(int(i), int(j))
        if key in table and abs(table[key] - lij) > 1e-9 * max(table[key], lij):
            raise InconsistentGluingError(
                f"edge {key} declared with lengths {table[key]} and {lij}"
            )
        table[key] = lij

    edge_faces: dict[tuple[int, int], int] = {}
    for f, (a, b, c) in enumerate(faces):
        if len({a, b, c}) != 3:
            raise DomainError(f"face {f} repeats a vertex")
        sides = []
        for u, v in ((b, c), (c, a), (a, b)):
            key = _canon(int(u), int(v))
            if key not in table:
                raise DomainError(f"face {f} uses edge {key} with no declared length")
            edge_faces[key] = edge_faces.get(key, 0) + 1
            if edge_faces[key] > 2:
                raise InconsistentGluingError(f"edge {key} is shared by more than two faces")
            sides.append(table[key])
        l0, l1, l2 = sides
        if l0 + l1 <= l2 or l1 + l2 <= l0 or l2 + l0 <= l1:
            raise TriangleInequalityError(
                f"face {f} has side lengths {sides} violating the strict triangle inequality"
            )

    surf = ConeSurface(n_vertices, faces, table, declared_k, embedding, mesh_h)

    # connectivity of the face-adjacency graph, and no orphan vertices
    seen_v = np.zeros(n_vertices, dtype=bool)
    seen_v[faces.ravel()] = True
    if not seen_v.all():
        raise DisconnectedError("surface has vertices not contained in any face")
    n_comp = _face_components(surf)
    if n_comp != 1:
        raise DisconnectedError(f"face-adjacency graph has {n_comp} components")
    return surf


def _face_components(surf: ConeSurface) -> int:
    F = surf.n_faces
    rows, cols = [], []
    for fs in surf.edge_faces:
        if len(fs) == 2:
            rows.append(fs[0])
            cols.append(fs[1])
    adj = sparse.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(F, F)
    )
    n, _ = csgraph.connected_components(adj, directed=False)
    return n


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _zip_rings(inner_ids, inner_ang, outer_ids, outer_ang, period):
    """Triangulate the annulus between two sorted angular rings."""
    faces = []
    a, b = len(inner_ids), len(outer_ids)
    if a == 1:
        for j in range(b):
            faces.append((inner_ids[0], outer_ids[j], outer_ids[(j + 1) % b]))
        return faces
    i = j = 0
    while i < a or j < b:
        ii, jj = i % a, j % b
        ai = inner_ang[(i + 1) % a] + period * ((i + 1) // a)
        aj = outer_ang[(j + 1) % b] + period * ((j + 1) // b)
        if i < a and (j >= b or ai <= aj):
            faces.append((inner_ids[ii], outer_ids[jj], inner_ids[(i + 1) % a]))
            i += 1
        else:
            faces.append((inner_ids[ii], outer_ids[jj], outer_ids[(j + 1) % b]))
            j += 1
    return faces


def _polar_mesh(total_angle: float, R: float, h: float, ring_scale: float):
    """Concentric-ring triangulation of a disk sector glued into a cone.

    ring_scale controls points per ring (arc spacing ~ h).  Returns
    (radii per vertex, angles per vertex, faces).
    """
    n_rings = max(2, round(R / h))
    dr = R / n_rings
    radii = [0.0]
    angles = [0.0]
    ring_ids = [[0]]
    ring_angles = [[0.0]]
    for k in range(1, n_rings + 1):
        r = k * dr
        n_k = max(3, round(total_angle * r / (ring_scale * h)))
        ids = list(range(len(radii), len(radii) + n_k))
        angs = [total_angle * m / n_k for m in range(n_k)]
        radii.extend([r] * n_k)
        angles.extend(angs)
        ring_ids.append(ids)
        ring_angles.append(angs)
    faces = []
    for k in range(n_rings):
        faces.extend(
            _zip_rings(
                ring_ids[k], ring_angles[k], ring_ids[k + 1], ring_angles[k + 1],
                total_angle,
            )
        )
    return np.asarray(radii), np.asarray(angles), np.asarray(faces, dtype=np.int64)


def _cone_edge_lengths(faces, radii, angles, total_angle):
    lengths = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = _canon(int(u), int(v))
            if key in lengths:
                continue
            dphi = abs(angles[u] - angles[v])
            dphi = min(dphi, total_angle - dphi)
            r1, r2 = radii[u], radii[v]
            lengths[key] = math.sqrt(
                max(r1 * r1 + r2 * r2 - 2 * r1 * r2 * math.cos(dphi), 0.0)
            )
    return lengths


def flat_disk(R: float, h: float) -> ConeSurface:
    """Flat disk of radius R: hexagonal-lattice interior, circular rim.

    The lattice interior keeps one-ring geometry translation invariant,
    which the gradient-field experiments rely on; the rim ring puts every
    boundary vertex exactly at radius R.  Vertex 0 is the center.
    """
    if R <= 0 or h <= 0:
        raise DomainError(f"flat_disk needs R > 0 and h > 0, got R={R}, h={h}")
    from scipy.spatial import Delaunay

    cutoff = R - 0.95 * h
    n = int(R / h) + 2
    pts = []
    for j in range(-n, n + 1):
        for i in range(-n, n + 1):
            x = h * (i + 0.5 * j)
            y = h * (math.sqrt(3.0) / 2.0) * j
            if x * x + y * y <= cutoff * cutoff:
                pts.append((x, y))
    if not pts:
        pts = [(0.0, 0.0)]
    pts.sort(key=lambda p: (round(math.hypot(*p), 12), math.atan2(p[1], p[0])))
    m = max(8, round(2 * math.pi * R / h))
    rim = [
        (R * math.cos(2 * math.pi * k / m), R * math.sin(2 * math.pi * k / m))
        for k in range(m)
    ]
    xy = np.asarray(pts + rim)
    faces = Delaunay(xy).simplices.astype(np.int64)
    lengths = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = _canon(int(u), int(v))
            if key not in lengths:
                lengths[key] = float(np.linalg.norm(xy[u] - xy[v]))
    return build_surface(faces, lengths, declared_k=0.0, embedding=xy, mesh_h=h)


def cone_disk(theta: float, R: float, h: float) -> ConeSurface:
    """Geodesic disk around the apex of a cone with total angle theta."""
    if not 0 < theta <= 4 * math.pi:
        raise DomainError(f"cone angle must lie in (0, 4 pi], got {theta}")
    if R <= 0 or h <= 0:
        raise DomainError(f"cone_disk needs R > 0 and h > 0, got R={R}, h={h}")
    radii, angles, faces = _polar_mesh(theta, R, h, 1.0)
    lengths = _cone_edge_lengths(faces, radii, angles, theta)
    # abstract cone coordinates (r, phi) kept for diagnostics only
    coords = np.c_[radii, angles]
    surf = build_surface(faces, lengths, declared_k=0.0, mesh_h=h)
    surf.cone_coords = coords
    return surf


def flat_torus(L: float, h: float) -> ConeSurface:
    """Square flat torus of side L on an n x n grid, n = round(L/h)."""
    if L <= 0 or h <= 0:
        raise DomainError(f"flat_torus needs L > 0 and h > 0, got L={L}, h={h}")
    n = max(2, round(L / h))
    step = L / n
    vid = lambda i, j: (i % n) * n + (j % n)
    faces = []
    lengths = {}
    diag = math.sqrt(2.0) * step
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
            for (u, v), l in (((v00, v10), step), ((v00, v01), step),
                              ((v00, v11), diag)):
                lengths[_canon(u, v)] = l
    coords = np.asarray([[ (v // n) * step, (v % n) * step] for v in range(n * n)])
    surf = build_surface(np.asarray(faces), lengths, declared_k=0.0,
                         embedding=coords, mesh_h=step)
    return surf


_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.asarray(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=float,
)
_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def icosphere(subdivisions: int) -> ConeSurface:
    """Subdivided icosahedron on the unit sphere with great-circle edge lengths.

    The declared curvature bound k = 1 is metadata justified by convergence
    to the round sphere, not certified.
    """
    if subdivisions < 0 or int(subdivisions) != subdivisions:
        raise DomainError(f"subdivisions must be a nonnegative integer, got {subdivisions}")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = list(_ICO_FACES)
    for _ in range(int(subdivisions)):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = _canon(i, j)
            m = midpoint.get(key)
            if m is None:
                v = verts[i] + verts[j]
                verts.append(v / np.linalg.norm(v))
                m = len(verts) - 1
                midpoint[key] = m
            return m

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = nxt
    verts = np.asarray(verts)
    faces = np.asarray(faces, dtype=np.int64)
    lengths = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = _canon(int(u), int(v))
            if key not in lengths:
                dot = float(np.clip(np.dot(verts[u], verts[v]), -1.0, 1.0))
                lengths[key] = math.acos(dot)
    mesh_h = float(np.mean(list(lengths.values())))
    return build_surface(faces, lengths, declared_k=1.0, embedding=verts,
                         mesh_h=mesh_h)


# ---------------------------------------------------------------------------
# Steiner graph and distance fields
# ---------------------------------------------------------------------------


class _SteinerGraph:
    """Shortest-path graph: mesh vertices plus Steiner points on edges.

    Steiner points subdivide each edge at spacing <= h; within every face
    all node pairs on different sides are linked by their straight-line
    chart distance.
    """

    def __init__(self, surf: ConeSurface, h: float):
        if h <= 0:
            raise DomainError(f"Steiner spacing must be positive, got {h}")
        self.surface = surf
        self.h = h
        V = surf.n_vertices
        # per edge: list of node ids in order from endpoint min to max
        self.edge_nodes: list[np.ndarray] = []
        self.node_edge_frac: list[tuple[int, float]] = []  # for Steiner nodes only
        next_id = V
        rows, cols, vals = [], [], []
        for e, (i, j) in enumerate(surf.edges):
            L = surf.edge_lengths[e]
            m = max(0, math.ceil(L / h) - 1)
            ids = [int(i)] + list(range(next_id, next_id + m)) + [int(j)]
            fr = np.linspace(0.0, 1.0, m + 2)
            for t in fr[1:-1]:
                self.node_edge_frac.append((e, float(t)))
            next_id += m
            self.edge_nodes.append(np.asarray(ids, dtype=np.int64))
            seg = L / (m + 1)
            for a, b in zip(ids[:-1], ids[1:]):
                rows.append(a)
                cols.append(b)
                vals.append(seg)
        self.n_nodes = next_id

        chunks_r = [np.asarray(rows, dtype=np.int64)]
        chunks_c = [np.asarray(cols, dtype=np.int64)]
        chunks_v = [np.asarray(vals, dtype=float)]
        charts = surf.charts()
        for f in range(surf.n_faces):
            loc = {int(surf.faces[f, t]): t for t in range(3)}
            side_pts = []
            for s in range(3):
                e = surf.face_edge[f, s]
                i, j = surf.edges[e]
                ids = self.edge_nodes[e]
                fr = np.linspace(0.0, 1.0, len(ids))
                pi = charts[f, loc[int(i)]]
                pj = charts[f, loc[int(j)]]
                pts = pi[None, :] + fr[:, None] * (pj - pi)[None, :]
                side_pts.append((ids, pts))
            for s in range(3):
                ids_a, pts_a = side_pts[s]
                for t in range(s + 1, 3):
                    ids_b, pts_b = side_pts[t]
                    d = np.linalg.norm(pts_a[:, None, :] - pts_b[None, :, :], axis=2)
                    uu = np.broadcast_to(ids_a[:, None], d.shape).ravel()
                    vv = np.broadcast_to(ids_b[None, :], d.shape).ravel()
                    keep = uu != vv
                    chunks_r.append(uu[keep])
                    chunks_c.append(vv[keep])
                    chunks_v.append(d.ravel()[keep])
        # duplicates (shared face sides, repeated cross pairs): keep the minimum
        self.matrix = _min_coo(
            np.concatenate(chunks_r), np.concatenate(chunks_c),
            np.concatenate(chunks_v), self.n_nodes,
        )
        if self.node_edge_frac:
            self.steiner_edge = np.asarray([e for e, _ in self.node_edge_frac])
            self.steiner_frac = np.asarray([t for _, t in self.node_edge_frac])
        else:
            self.steiner_edge = np.empty(0, dtype=np.int64)
            self.steiner_frac = np.empty(0)

    def node_position(self, node: int):
        """(edge id, fraction) for a Steiner node, or None for a vertex."""
        V = self.surface.n_vertices
        if node < V:
            return None
        return self.node_edge_frac[node - V]

    def node_values(self, vertex_values: np.ndarray) -> np.ndarray:
        """PL interpolation of a vertex function onto all graph nodes."""
        surf = self.surface
        a = surf.edges[self.steiner_edge, 0]
        b = surf.edges[self.steiner_edge, 1]
        t = self.steiner_frac
        interp = (1 - t) * vertex_values[a] + t * vertex_values[b]
        return np.concatenate([vertex_values, interp])


def _min_coo(rows, cols, vals, n):
    """Symmetric csr adjacency keeping the minimum length over duplicates."""
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    key = lo * n + hi
    order = np.argsort(key, kind="stable")
    key = key[order]
    v = vals[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    group = np.cumsum(first) - 1
    mins = np.full(int(group[-1]) + 1 if len(group) else 0, np.inf)
    np.minimum.at(mins, group, v)
    ukey = key[first]
    ulo = ukey // n
    uhi = ukey % n
    rr = np.concatenate([ulo, uhi])
    cc = np.concatenate([uhi, ulo])
    vv = np.concatenate([mins, mins])
    return sparse.csr_matrix((vv, (rr, cc)), shape=(n, n))


@dataclass
class DistanceField:
    """Graph distances from one source vertex, with predecessors for tracing."""

    surface: ConeSurface
    source: int
    h: float
    node_dist: np.ndarray
    predecessors: np.ndarray
    error_bound: float

    @property
    def vertex_dist(self) -> np.ndarray:
        return self.node_dist[: self.surface.n_vertices]

    def distance_to(self, vertex: int) -> float:
        d = self.node_dist[vertex]
        if not math.isfinite(d):
            raise UnreachableError(f"vertex {vertex} unreachable from {self.source}")
        return float(d)


def distance_field(space: ConeSurface, source: int, h: float) -> DistanceField:
    """Shortest-path distance field from a source vertex.

    Distances are exact on the Steiner graph and overestimate the true
    geodesic distance by O(h); the recorded error bound is the frozen
    regression constant times h.
    """
    if not 0 <= source < space.n_vertices:
        raise DomainError(f"source vertex {source} out of range")
    g = space.graph(h)
    dist, pred = csgraph.dijkstra(
        g.matrix, directed=False, indices=source, return_predecessors=True
    )
    return DistanceField(
        surface=space,
        source=source,
        h=h,
        node_dist=dist,
        predecessors=pred,
        error_bound=DISTANCE_ERROR_FACTOR * h,
    )


class DistanceCache:
    """Shared Steiner graph plus memoized per-source distance fields."""

    def __init__(self, space: ConeSurface, h: float):
        self.space = space
        self.h = float(h)
        self._fields: dict[int, DistanceField] = {}

    def field(self, source: int) -> DistanceField:
        fld = self._fields.get(source)
        if fld is None:
            fld = distance_field(self.space, source, self.h)
            self._fields[source] = fld
        return fld

    def vertex_block(self, sources, limit=np.inf, chunk_cells=16_000_000):
        """Vertex-to-vertex distances (len(sources), V), inf beyond `limit`.

        Chunked over sources to bound peak memory.
        """
        g = self.space.graph(self.h)
        V = self.space.n_vertices
        sources = np.asarray(sources, dtype=np.int64)
        out = np.empty((len(sources), V))
        step = max(1, int(chunk_cells // max(g.n_nodes, 1)))
        for lo in range(0, len(sources), step):
            idx = sources[lo : lo + step]
            d = csgraph.dijkstra(g.matrix, directed=False, indices=idx, limit=limit)
            out[lo : lo + step] = d[:, :V]
        return out


def trace_shortest_path(field: DistanceField, target: int):
    """Graph node sequence from the field's source to `target`.

    Returns (node ids, cumulative arclengths); the final arclength equals
    the graph distance exactly.
    """
    if not math.isfinite(field.node_dist[target]):
        raise UnreachableError(
            f"vertex {target} unreachable from {field.source}"
        )
    seq = [int(target)]
    while seq[-1] != field.source:
        p = field.predecessors[seq[-1]]
        if p < 0:
            raise UnreachableError(
                f"no predecessor chain from {target} to {field.source}"
            )
        seq.append(int(p))
    seq.reverse()
    arc = field.node_dist[np.asarray(seq)]
    return np.asarray(seq, dtype=np.int64), np.asarray(arc)


def path_values(surface: ConeSurface, graph_h: float, nodes: np.ndarray,
                vertex_values: np.ndarray) -> np.ndarray:
    """Values of a PL vertex function at graph nodes along a traced path."""
    g = surface.graph(graph_h)
    V = surface.n_vertices
    out = np.empty(len(nodes))
    for i, node in enumerate(nodes):
        if node < V:
            out[i] = vertex_values[node]
        else:
            e, t = g.node_edge_frac[node - V]
            a, b = surface.edges[e]
            out[i] = (1 - t) * vertex_values[a] + t * vertex_values[b]
    return out


class _VertexFan:
    """Cyclic (or arc) ordering of the corners incident to a vertex.

    Assigns every incident edge an angular coordinate in [0, cone_angle);
    for boundary vertices the fan is an open arc starting at one boundary
    edge.
    """

    def __init__(self, surf: ConeSurface, p: int):
        self.surface = surf
        self.p = p
        incident = []  # (face, local index of p)
        for f in range(surf.n_faces):
            for t in range(3):
                if surf.faces[f, t] == p:
                    incident.append((f, t))
        if not incident:
            raise DomainError(f"vertex {p} has no incident faces")
        # edges at p within face f: the two sides adjacent to corner t
        # side s is opposite local vertex s, so sides at corner t are the
        # other two side indices.
        by_edge: dict[int, list[tuple[int, int]]] = {}
        for f, t in incident:
            for s in range(3):
                if s != t:
                    by_edge.setdefault(int(surf.face_edge[f, s]), []).append((f, t))
        # start at a boundary edge when p lies on the boundary
        start_edge = None
        for e, fs in by_edge.items():
            if len(fs) == 1 and len(surf.edge_faces[e]) == 1:
                start_edge = e
        if start_edge is None:
            start_edge = min(by_edge)
        self.edge_angle: dict[int, float] = {}
        self.corner_base: dict[int, tuple[float, int]] = {}  # face -> (base angle, enter edge)
        used = set()
        cur_edge = start_edge
        acc = 0.0
        self.edge_angle[cur_edge] = 0.0
        while True:
            nxt = None
            for f, t in by_edge.get(cur_edge, ()):  # faces touching cur_edge at p
                if f in used:
                    continue
                nxt = (f, t)
                break
            if nxt is None:
                break
            f, t = nxt
            used.add(f)
            self.corner_base[f] = (acc, cur_edge)
            # exit edge: the other side at the corner
            sides = [int(surf.face_edge[f, s]) for s in range(3) if s != t]
            exit_edge = sides[1] if sides[0] == cur_edge else sides[0]
            acc += surf.corner_angle[f, t]
            if exit_edge not in self.edge_angle:
                self.edge_angle[exit_edge] = acc
            cur_edge = exit_edge
        self.total = acc if len(used) == len(incident) else surf.cone_angle[p]

    def angle_of_segment(self, graph: _SteinerGraph, first_node: int) -> float:
        """Angular coordinate of the segment from p toward a graph node."""
        surf = self.surface
        p = self.p
        pos = graph.node_position(first_node)
        if pos is None:
            # neighbor vertex: segment runs along a mesh edge
            e = surf.edge_index[_canon(p, int(first_node))]
            return self.edge_angle[e] % max(self.total, 1e-300)
        e, t = pos
        a, b = surf.edges[e]
        if a == p or b == p:
            return self.edge_angle[e] % max(self.total, 1e-300)
        # segment crosses a face: find the face containing both p and edge e
        for f in surf.edge_faces[e]:
            if p in surf.faces[f]:
                break
        else:
            raise DomainError(
                f"graph node {first_node} is not adjacent to vertex {p}"
            )
        charts = surf.charts()
        loc = {int(surf.faces[f, s]): s for s in range(3)}
        x = charts[f, loc[int(a)]] + t * (charts[f, loc[int(b)]] - charts[f, loc[int(a)]])
        base, enter_edge = self.corner_base[f]
        u, v = surf.edges[enter_edge]
        other = int(v) if int(u) == p else int(u)
        vec_edge = charts[f, loc[other]] - charts[f, loc[p]]
        vec_seg = x - charts[f, loc[p]]
        cosang = np.dot(vec_edge, vec_seg) / (
            np.linalg.norm(vec_edge) * np.linalg.norm(vec_seg)
        )
        alpha = math.acos(min(1.0, max(-1.0, float(cosang))))
        return (base + alpha) % max(self.total, 1e-300)


def initial_direction(space: ConeSurface, p: int, q: int, h: float,
                      cache: DistanceCache | None = None) -> float:
    """Angular coordinate in the direction space at p of a shortest path p -> q."""
    if p == q:
        raise DomainError("initial_direction needs q != p")
    fld = cache.field(p) if cache is not None else distance_field(space, p, h)
    nodes, _ = trace_shortest_path(fld, q)
    return space.fan(p).angle_of_segment(space.graph(fld.h), int(nodes[1]))


def toponogov_check(space: ConeSurface, cache: DistanceCache,
                    quadruple, kappa: float, tol: float) -> bool:
    """Alexandrov quadruple condition: the three comparison angles at p sum
    to at most 2 pi + tol."""
    p, a, b, c = quadruple
    dp = cache.field(p)
    da = cache.field(a)
    db = cache.field(b)
    pa, pb, pc = dp.distance_to(a), dp.distance_to(b), dp.distance_to(c)
    ab, bc, ca = da.distance_to(b), db.distance_to(c), da.distance_to(c)
    total = (
        comparison_angle(kappa, ab, pa, pb)
        + comparison_angle(kappa, bc, pb, pc)
        + comparison_angle(kappa, ca, pc, pa)
    )
    return bool(total <= 2 * math.pi + tol)


# ---------------------------------------------------------------------------
# ball volumes from a PL distance field
# ---------------------------------------------------------------------------


def _sublevel_fraction(vals: np.ndarray, r: float) -> np.ndarray:
    """Per-face area fraction of {PL interpolant <= r}; exact for PL fields."""
    srt = np.sort(vals, axis=1)
    a, b, c = srt[:, 0], srt[:, 1], srt[:, 2]
    out = np.zeros(len(vals))
    out[r >= c] = 1.0
    mid = (r > a) & (r <= b)
    den1 = np.maximum((b - a) * (c - a), 1e-300)
    out[mid] = ((r - a) ** 2 / den1)[mid]
    hi = (r > b) & (r < c)
    den2 = np.maximum((c - a) * (c - b), 1e-300)
    out[hi] = (1.0 - (c - r) ** 2 / den2)[hi]
    return out


def ball_volume(space: ConeSurface, field: DistanceField, r: float) -> float:
    """Area of the sub-level set {dist <= r} of the PL distance interpolant."""
    vals = field.vertex_dist[space.faces]
    return float(np.sum(space.face_area * _sublevel_fraction(vals, r)))


def ball_volume_profile(space: ConeSurface, field: DistanceField, radii):
    return [(float(r), ball_volume(space, field, r)) for r in radii]


# ---------------------------------------------------------------------------
# mesh text format
# ---------------------------------------------------------------------------


def save_off(space: ConeSurface, path) -> None:
    """Write the header-counts-vertices-faces text format with a #lengths trailer.

    Embedding coordinates are written when present (2D padded to 3D);
    abstract surfaces get zero coordinates and rely on the trailer.
    """
    V = space.n_vertices
    emb = space.embedding
    if emb is None:
        coords = np.zeros((V, 3))
    elif emb.shape[1] == 2:
        coords = np.c_[emb, np.zeros(V)]
    else:
        coords = emb
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{V} {space.n_faces} 0\n")
        for row in coords:
            fh.write(f"{row[0]:.17g} {row[1]:.17g} {row[2]:.17g}\n")
        for a, b, c in space.faces:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write("#lengths\n")
        for e, (i, j) in enumerate(space.edges):
            fh.write(f"{i} {j} {space.edge_lengths[e]:.17g}\n")


def load_off(path, declared_k: float = 0.0) -> ConeSurface:
    """Parse the mesh text format; the optional #lengths trailer overrides
    embedding distances.  Rejects NaN and nonpositive lengths."""
    with open(path) as fh:
        lines = fh.readlines()

    def fail(lineno, msg):
        raise MeshFormatError(f"{path}:{lineno}: {msg}")

    idx = 0

    def next_content():
        nonlocal idx
        while idx < len(lines):
            raw = lines[idx]
            idx += 1
            stripped = raw.strip()
            if stripped == "#lengths":
                return idx, stripped
            if not stripped or stripped.startswith("#"):
                continue
            return idx, stripped
        return None, None

    lineno, header = next_content()
    if header != "OFF":
        fail(lineno or 1, "expected OFF header")
    lineno, counts = next_content()
    if counts is None:
        fail(len(lines), "missing counts line")
    parts = counts.split()
    if len(parts) != 3:
        fail(lineno, "counts line must be 'V F 0'")
    try:
        nv, nf = int(parts[0]), int(parts[1])
    except ValueError:
        fail(lineno, "counts must be integers")
    coords = np.empty((nv, 3))
    for v in range(nv):
        lineno, row = next_content()
        if row is None:
            fail(len(lines), f"expected {nv} vertex lines")
        vals = row.split()
        if len(vals) != 3:
            fail(lineno, "vertex line must have 3 coordinates")
        try:
            coords[v] = [float(x) for x in vals]
        except ValueError:
            fail(lineno, "bad vertex coordinate")
        if not np.all(np.isfinite(coords[v])):
            fail(lineno, "vertex coordinate is not finite")
    faces = np.empty((nf, 3), dtype=np.int64)
    for f in range(nf):
        lineno, row = next_content()
        if row is None:
            fail(len(lines), f"expected {nf} face lines")
        vals = row.split()
        if len(vals) != 4 or vals[0] != "3":
            fail(lineno, "face line must be '3 i j k'")
        try:
            faces[f] = [int(x) for x in vals[1:]]
        except ValueError:
            fail(lineno, "bad face index")
        if np.any(faces[f] < 0) or np.any(faces[f] >= nv):
            fail(lineno, "face index out of range")
    overrides = []
    lineno, row = next_content()
    if row == "#lengths":
        while True:
            lineno, row = next_content()
            if row is None:
                break
            vals = row.split()
            if len(vals) != 3:
                fail(lineno, "length line must be 'i j L'")
            try:
                i, j, L = int(vals[0]), int(vals[1]), float(vals[2])
            except ValueError:
                fail(lineno, "bad length record")
            if math.isnan(L) or L <= 0:
                fail(lineno, f"invalid edge length {L}")
            if not 0 <= i < nv or not 0 <= j < nv:
                fail(lineno, "length record index out of range")
            overrides.append((i, j, L))
    elif row is not None:
        fail(lineno, f"unexpected trailing content: {row!r}")

    table: dict[tuple[int, int], float] = {}
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = _canon(int(u), int(v))
            if key not in table:
                table[key] = float(np.linalg.norm(coords[u] - coords[v]))
    for i, j, L in overrides:
        table[_canon(i, j)] = L
    embedding = coords if np.any(coords) else None
    return build_surface(faces, table, declared_k=declared_k, embedding=embedding)
