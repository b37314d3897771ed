"""Both kernel backends answer every query identically."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import point_distance, polygon_distance as shp_distance
from tunnelpark import _backend, _kernels_py
from tunnelpark.geometry import OrientedBox, PolygonSet
from tunnelpark.scenario import DilatedMap, load_bundled

from conftest import _compiled
from test_geometry import random_convex


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")
    if _compiled is not None:
        assert _backend.BACKEND == "cython" or _backend.kernels is _kernels_py


@pytest.fixture(scope="module")
def case3():
    return DilatedMap(load_bundled("case3"))


def test_point_queries(kern, case3, rng):
    p = case3.packed
    xmin, ymin, xmax, ymax = case3.scenario.bounds
    for x, y in rng.uniform((xmin, ymin), (xmax, ymax), size=(300, 2)):
        d = min(point_distance((x, y), poly.vertices) for poly in case3.polygons)
        assert kern.point_clearance(x, y, p.verts, p.offsets) == pytest.approx(d, abs=1e-9)
        for r in (0.5, case3.r_c, 3.0):
            if abs(d - r) > 1e-9:
                assert kern.point_clear(x, y, p.verts, p.offsets, p.aabbs, r) == (d >= r)


def test_box_clear(kern, case3, rng):
    p = case3.packed
    xmin, ymin, xmax, ymax = case3.scenario.bounds
    for _ in range(200):
        box = OrientedBox(rng.uniform((xmin, ymin), (xmax, ymax)), rng.uniform(-math.pi, math.pi),
                          rng.uniform(0.05, 2.0, 4))
        d = min(shp_distance(box.vertices, poly.vertices) for poly in case3.polygons)
        if abs(d - case3.r_c) > 1e-9:
            assert kern.box_clear(box.vertices, p.verts, p.offsets, p.aabbs, case3.r_c) == (d >= case3.r_c)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_polygon_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    a = random_convex(rng, rng.uniform(-2, 2, 2), rng.uniform(0.3, 2)).vertices
    b = random_convex(rng, rng.uniform(-2, 2, 2), rng.uniform(0.3, 2)).vertices
    mods = [_kernels_py] + ([_compiled] if _compiled is not None else [])
    dist = {m.polygon_distance(a, b) for m in mods}
    over = {m.polygons_overlap(a, b) for m in mods}
    assert len(over) == 1
    assert max(dist) - min(dist) < 1e-12
    x, y = rng.uniform(-3, 3, 2)
    pd = [m.point_polygon_distance(x, y, a) for m in mods]
    assert max(pd) - min(pd) < 1e-12


def test_arc_rollout_agree(kern, case3, rng):
    p = case3.packed
    off_f, off_r = case3.disc_offsets
    xmin, ymin, xmax, ymax = case3.scenario.bounds
    for x, y, th in rng.uniform((xmin, ymin, -math.pi), (xmax, ymax, math.pi), size=(200, 3)):
        step = rng.choice([-0.6, 0.6])
        kappa = rng.choice([-0.3, 0.0, 0.12])
        got = kern.arc_rollout(x, y, th, step, kappa, 6, off_f, off_r, p.verts, p.offsets, p.aabbs,
                               case3.r_c)
        ref = _kernels_py.arc_rollout(x, y, th, step, kappa, 6, off_f, off_r, p.verts, p.offsets,
                                      p.aabbs, case3.r_c)
        assert bool(got[0]) == bool(ref[0])
        if ref[0]:
            assert np.allclose(got[1:], ref[1:], atol=1e-12)
            # end pose of the arc in closed form
            if kappa == 0.0:
                exp = (x + step * math.cos(th), y + step * math.sin(th), th)
            else:
                te = th + kappa * step
                exp = (x + (math.sin(te) - math.sin(th)) / kappa,
                       y - (math.cos(te) - math.cos(th)) / kappa, te)
            assert np.allclose(got[1:], exp, atol=1e-12)


def test_givens_drop_keeps_factorization(kern, rng):
    n, q = 9, 6
    A = rng.normal(size=(n, q))
    J = np.ascontiguousarray(np.eye(n))
    Q, R = np.linalg.qr(A, mode="complete")
    J = np.ascontiguousarray(Q)
    Rfull = np.zeros((n, n))
    Rfull[:, :q] = R
    for k in (0, 2, q - 1):
        Rk, Jk = Rfull.copy(), J.copy()
        kern.givens_drop(Rk, Jk, k, q)
        keep = [j for j in range(q) if j != k]
        # the remaining columns are reproduced and R stays upper triangular
        assert np.allclose(Jk @ Rk[:, :q - 1], A[:, keep], atol=1e-12)
        assert np.allclose(np.tril(Rk[:q - 1, :q - 1], -1), 0.0, atol=1e-14)
        assert np.allclose(Jk.T @ Jk, np.eye(n), atol=1e-12)


def test_polygon_set_empty():
    ps = PolygonSet([])
    assert len(ps) == 0
    assert ps.point_clear(0.0, 0.0, 1.0)
