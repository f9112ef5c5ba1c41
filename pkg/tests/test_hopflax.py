import math

import numpy as np
import pytest

from alexlab.calculus import PLFunction
from alexlab.exceptions import DomainError
from alexlab.hopflax import (
    descent_slope_field,
    footpoint_audit,
    hopf_lax,
    semigroup_audit,
)
from alexlab.space import DistanceCache, distance_field, flat_disk, path_values, trace_shortest_path

RNG = np.random.default_rng(11)


@pytest.fixture(scope="module")
def disk():
    return flat_disk(1.0, 0.1)


@pytest.fixture(scope="module")
def cache(disk):
    return DistanceCache(disk, disk.mesh_h)


def test_constant_function_fixed_point(disk, cache):
    u = PLFunction.constant(disk, 2.5)
    res = hopf_lax(disk, cache, u, 0.3)
    assert np.abs(res.values - 2.5).max() == 0.0
    assert np.array_equal(res.foot, np.arange(disk.n_vertices))
    assert np.abs(res.foot_dist).max() == 0.0


def test_rejects_nonpositive_t(disk, cache):
    u = PLFunction.constant(disk, 0.0)
    with pytest.raises(DomainError):
        hopf_lax(disk, cache, u, 0.0)


def test_value_never_exceeds_u(disk, cache):
    u = PLFunction(disk, RNG.normal(size=disk.n_vertices))
    res = hopf_lax(disk, cache, u, 0.2)
    assert np.all(res.values <= u.values + 1e-15)
    assert res.values.min() >= u.values.min() - 1e-15


def test_foot_point_identity_by_construction(disk, cache):
    u = PLFunction(disk, RNG.normal(size=disk.n_vertices))
    t = 0.15
    res = hopf_lax(disk, cache, u, t)
    recon = u.values[res.foot] + res.foot_dist**2 / (2 * t)
    assert np.abs(recon - res.values).max() <= 1e-14


def test_distance_cone_closed_form():
    disk = flat_disk(1.0, 0.05)
    fld = distance_field(disk, 0, 0.02)
    u = PLFunction(disk, fld.vertex_dist)
    cache = DistanceCache(disk, disk.mesh_h)
    t = 0.2
    res = hopf_lax(disk, cache, u, t)
    d = fld.vertex_dist
    closed = np.where(d >= t, d - t / 2, d * d / (2 * t))
    assert np.abs(res.values - closed).max() <= 0.05


def test_monotone_convergence_to_u(disk, cache):
    fld = distance_field(disk, 0, 0.05)
    u = PLFunction(disk, fld.vertex_dist)
    gaps = []
    for t in (0.4, 0.2, 0.1, 0.05):
        res = hopf_lax(disk, cache, u, t)
        gaps.append(np.abs(res.values - u.values).max())
    assert all(a >= b - 1e-15 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


def test_order_preserving_exact(disk, cache):
    u = PLFunction(disk, RNG.normal(size=disk.n_vertices))
    v = PLFunction(disk, u.values + np.abs(RNG.normal(size=disk.n_vertices)))
    ru = hopf_lax(disk, cache, u, 0.3)
    rv = hopf_lax(disk, cache, v, 0.3)
    assert np.all(ru.values <= rv.values + 1e-14)


def test_constant_shift_equivariance(disk, cache):
    u = PLFunction(disk, RNG.normal(size=disk.n_vertices))
    shifted = PLFunction(disk, u.values + 5.0)
    r0 = hopf_lax(disk, cache, u, 0.25)
    r1 = hopf_lax(disk, cache, shifted, 0.25)
    assert np.abs(r1.values - r0.values - 5.0).max() <= 1e-12
    assert np.array_equal(r0.foot, r1.foot)


def test_pruning_correctness(disk, cache):
    # recomputing one node's minimum without pruning agrees exactly
    u = PLFunction(disk, RNG.normal(size=disk.n_vertices))
    t = 0.17
    res = hopf_lax(disk, cache, u, t)
    x = int(RNG.integers(disk.n_vertices))
    d = cache.vertex_block([x], limit=np.inf)[0]
    cand = u.values + d * d / (2 * t)
    best = int(np.argmin(cand))
    assert res.values[x] == pytest.approx(cand[best], abs=1e-15)
    assert res.foot[x] == best


def test_linear_function_foot_shift():
    disk = flat_disk(1.0, 0.05)
    cache = DistanceCache(disk, disk.mesh_h)
    u = PLFunction.from_embedding(disk, lambda x, y: 1 + x)
    t = 0.1
    res = hopf_lax(disk, cache, u, t)
    fld = distance_field(disk, 0, 0.05)
    inner = fld.vertex_dist <= 0.6
    # interior: u_t = 1 + x - t/2 and the foot sits t against grad u
    xy = disk.embedding
    want = 1 + xy[inner, 0] - t / 2
    assert np.abs(res.values[inner] - want).max() <= 0.01
    assert np.abs(res.foot_dist[inner] - t).max() <= 0.03
    shift = xy[res.foot[inner]] - xy[inner]
    assert np.abs(shift[:, 0] + t).max() <= 0.03
    assert np.abs(shift[:, 1]).max() <= 0.03


def test_semiconcavity_along_geodesic():
    # second differences of u_t along a traced geodesic, minus those of the
    # frozen-foot parabola, are nonpositive up to tolerance
    disk = flat_disk(1.0, 0.05)
    cache = DistanceCache(disk, disk.mesh_h)
    fld = distance_field(disk, 0, 0.02)
    u = PLFunction(disk, fld.vertex_dist)
    t = 0.2
    res = hopf_lax(disk, cache, u, t)
    xy = disk.embedding
    a = int(np.argmin(np.linalg.norm(xy - [-0.5, 0.05], axis=1)))
    b = int(np.argmin(np.linalg.norm(xy - [0.5, 0.05], axis=1)))
    path_field = cache.field(a)
    nodes, arcs = trace_shortest_path(path_field, b)
    vals = path_values(disk, cache.h, nodes, res.values)
    keep = slice(1, -1)
    for m in range(2, len(nodes) - 2):
        s1 = arcs[m] - arcs[m - 1]
        s2 = arcs[m + 1] - arcs[m]
        if min(s1, s2) < 0.02:
            continue
        ys = int(nodes[m]) if nodes[m] < disk.n_vertices else None
        if ys is None:
            continue
        ystar = int(res.foot[ys])
        dfoot = cache.field(ystar).node_dist[nodes[m - 1 : m + 2]]
        para = dfoot**2 / (2 * t)
        d2u = vals[m - 1] - 2 * vals[m] + vals[m + 1]
        d2p = para[0] - 2 * para[1] + para[2]
        step = 0.5 * (s1 + s2)
        assert d2u - d2p <= 0.5 * step**2 + 5e-3


def test_semigroup_audit_linear():
    disk = flat_disk(1.0, 0.05)
    cache = DistanceCache(disk, disk.mesh_h)
    u = PLFunction.from_embedding(disk, lambda x, y: 1 + x)
    rep = semigroup_audit(disk, cache, u, [0.05, 0.1, 0.2])
    assert rep.passed
    assert rep.fitted["max_derivative_error"] <= 0.05


def test_semigroup_audit_constant(disk, cache):
    u = PLFunction.constant(disk, 3.0)
    rep = semigroup_audit(disk, cache, u, [0.1, 0.2])
    assert rep.passed
    assert rep.fitted["max_derivative_error"] <= 1e-12


def test_semigroup_audit_distance_cone(disk, cache):
    # t above mesh resolution; the kink ring d = t dominates the error
    fld = distance_field(disk, 0, 0.05)
    u = PLFunction(disk, fld.vertex_dist)
    rep = semigroup_audit(disk, cache, u, [0.2, 0.3], derivative_tol=0.4)
    assert rep.passed


def test_footpoint_audit_constant(disk, cache):
    u = PLFunction.constant(disk, 1.0)
    res = hopf_lax(disk, cache, u, 0.05)
    rep = footpoint_audit(disk, cache, res, u)
    assert rep.passed
    assert rep.fitted["max_identity_error"] <= 1e-12


def test_footpoint_audit_distance():
    disk = flat_disk(1.0, 0.05)
    cache = DistanceCache(disk, disk.mesh_h)
    fld = distance_field(disk, 0, 0.02)
    u = PLFunction(disk, fld.vertex_dist)
    res = hopf_lax(disk, cache, u, 0.2)
    rep = footpoint_audit(disk, cache, res, u)
    assert rep.passed
    assert rep.fitted["max_identity_error"] <= 0.05


def test_descent_slope_field(disk):
    fld = distance_field(disk, 0, 0.05)
    u = PLFunction(disk, fld.vertex_dist)
    desc = descent_slope_field(disk, u)
    assert desc.max() <= 1.0 + 1e-9
    assert desc[0] == 0.0  # the source only goes up
