import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import euler_rollout, fd_jacobian
from tunnelpark.coarse_planner import plan_coarse_path
from tunnelpark.geometry import VehicleParams
from tunnelpark.ocp import (
    NX,
    T_F_MIN,
    DimensionMismatch,
    build_nlp,
    dynamics_rhs,
    retime,
    verify_solution,
    warm_start,
)
from tunnelpark.scenario import DilatedMap, Weights, default_scenario, load_bundled
from tunnelpark.timing import attach_time, front_rear_reference
from tunnelpark.tunnel import build_tunnels

VEH = VehicleParams()


def stages(sc, n_r=None):
    n_r = n_r or sc.planner.n_r
    dmap = DilatedMap(sc)
    path = plan_coarse_path(dmap, sc.start.pose, sc.goal.pose)
    ref = attach_time(path, sc.limits, sc.vehicle.l_w)
    pf, pr = front_rear_reference(ref, sc.vehicle)
    tunnels = build_tunnels(dmap, pf, pr, n_r, sc.planner.ds, sc.planner.l_limit, goal=sc.goal.pose)
    return ref, tunnels


@pytest.fixture(scope="module")
def case2():
    sc = load_bundled("case2")
    ref, tunnels = stages(sc)
    return sc, ref, tunnels, build_nlp(sc, tunnels, ref, sc.planner.n_fe)


@pytest.fixture(scope="module")
def parked():
    """Start equals goal: nothing to do."""
    sc = default_scenario(goal=default_scenario().start)
    ref, tunnels = stages(sc)
    return sc, build_nlp(sc, tunnels, ref, sc.planner.n_fe)


def test_dynamics_examples():
    # derivative order is (x, y, v, phi, theta)
    assert np.allclose(dynamics_rhs([0, 0, 0, 1, 0, 0.3, -0.2], VEH), [1, 0, 0.3, -0.2, 0])
    d = dynamics_rhs([4, 5, 1.2, 0, 0.4, 1.0, 0.1], VEH)
    assert d[0] == d[1] == d[4] == 0.0
    d = dynamics_rhs([0, 0, math.pi / 2, 2, 0.5, 0.7, 0.2], VEH)
    assert np.allclose(d, [0, 2, 0.7, 0.2, 2 * math.tan(0.5) / 2.8], atol=1e-12)
    assert d[4] == pytest.approx(0.39022, abs=1e-5)


def test_problem_size(case2):
    *_, nlp = case2
    assert (nlp.n, nlp.m_eq, nlp.m_in) == (428, 314, 488)
    z = nlp.x0
    assert len(nlp.eq(z)) == 314 and len(nlp.ineq(z)) == 488
    assert nlp.eq_jac(z).shape == (314, 428) and nlp.ineq_jac(z).shape == (488, 428)
    assert nlp.m_in == 8 * (nlp.n_fe + 1)


def test_dimension_mismatch(case2):
    sc, ref, tunnels, _ = case2
    with pytest.raises(DimensionMismatch):
        build_nlp(sc, tunnels, ref, 50)


def test_defects_match_euler_rollout(case2):
    *_, nlp = case2
    rng = np.random.default_rng(1)
    z = nlp.x0.copy()
    k = nlp.knots(z)
    k[:, 5:] = rng.uniform(-0.5, 0.5, size=(len(k), 2))
    h = z[-1] / nlp.n_fe
    roll = euler_rollout(k[0, :5], k[:-1, 5:], h, VEH.l_w)
    k[:, :5] = roll
    assert np.max(np.abs(nlp.eq(z)[:5 * nlp.n_fe])) < 1e-12


def test_warm_start_defects_first_order():
    sc = load_bundled("case2")
    ref, _ = stages(sc, n_r=10)
    prev = None
    for n in (30, 60, 120, 240):
        z = warm_start(ref, n, sc.limits)
        k = z[:-1].reshape(n + 1, NX)
        h = z[-1] / n
        f = np.array([dynamics_rhs(row, sc.vehicle) for row in k[:-1]])[:, [0, 1, 4, 2, 3]]
        defect = np.abs(k[1:, :5] - k[:-1, :5] - h * f).max(axis=0)
        # pose and speed converge at least linearly in h
        assert np.all(defect[:4] <= 2.0 * sc.limits.a_max * h)
        if prev is not None:
            assert np.all(defect[:4] < prev[:4])
        # the reference steering is piecewise constant, so its defect stays bounded only
        assert defect[4] <= 2.0 * sc.limits.phi_max + 1e-12
        prev = defect


def test_warm_start_cost_at_least_reference(case2):
    _, ref, _, nlp = case2
    assert nlp.x0[-1] == pytest.approx(ref.t_f_ref)
    assert nlp.cost(nlp.x0) >= ref.t_f_ref


def test_zero_motion_warm_start_feasible(parked):
    sc, nlp = parked
    z = nlp.x0
    assert z[-1] == T_F_MIN
    assert np.max(np.abs(nlp.eq(z))) == 0.0
    assert np.min(nlp.ineq(z)) >= 0.0
    audit = verify_solution(sc, z, nlp)
    assert audit.passed
    assert audit.max_defect == 0.0 and audit.max_boundary_violation == 0.0
    assert audit.max_bound_violation == 0.0 and audit.tunnel_violations == []


def test_cost_with_zero_controls(case2):
    *_, nlp = case2
    z = nlp.x0.copy()
    nlp.knots(z)[:, 5:] = 0.0
    z[-1] = 7.25
    assert nlp.cost(z) == 7.25
    assert nlp.cost_grad(z)[-1] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cost_is_final_time_without_weights(seed):
    sc = load_bundled("case2")
    nlp = _unweighted(sc)
    z = np.random.default_rng(seed).uniform(-2, 2, nlp.n)
    z[-1] = abs(z[-1]) + 0.1
    assert nlp.cost(z) == z[-1]


_UNWEIGHTED = {}


def _unweighted(sc):
    if "nlp" not in _UNWEIGHTED:
        sc0 = replace(sc, weights=Weights(0.0, 0.0))
        ref, tunnels = stages(sc0, n_r=10)
        _UNWEIGHTED["nlp"] = build_nlp(sc0.with_planner(n_r=10, n_fe=10), tunnels, ref, 10)
    return _UNWEIGHTED["nlp"]


def random_points(nlp, count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        z = nlp.x0 + rng.normal(scale=0.3, size=nlp.n)
        z[-1] = nlp.x0[-1] * rng.uniform(0.7, 1.5)
        yield z


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def test_derivatives_vs_finite_differences(case2):
    *_, nlp = case2
    for z in random_points(nlp, 20):
        assert rel_err(nlp.cost_grad(z), fd_jacobian(nlp.cost, z)[0]) < 1e-6
        assert rel_err(nlp.eq_jac(z), fd_jacobian(nlp.eq, z)) < 1e-6
        assert rel_err(nlp.ineq_jac(z), fd_jacobian(nlp.ineq, z)) < 1e-6


def test_lagrangian_hessian_vs_finite_differences(case2):
    *_, nlp = case2
    rng = np.random.default_rng(5)
    lam_eq = rng.normal(size=nlp.m_eq)
    lam_in = rng.uniform(0, 1, size=nlp.m_in)

    def grad_l(z):
        return nlp.cost_grad(z) - nlp.eq_jac(z).T @ lam_eq - nlp.ineq_jac(z).T @ lam_in

    for z in random_points(nlp, 3, seed=9):
        H = nlp.lagrangian_hessian(z, lam_eq, lam_in)
        assert np.array_equal(H, H.T)
        assert rel_err(H, fd_jacobian(grad_l, z, rel_step=1e-6)) < 1e-6


def test_tunnel_rows_affine_in_position(case2):
    *_, nlp = case2
    rng = np.random.default_rng(2)
    z1 = nlp.x0.copy()
    z2 = z1.copy()
    k2 = nlp.knots(z2)
    k2[:, :2] += rng.normal(scale=2.0, size=(len(k2), 2))
    J1, J2 = nlp.ineq_jac(z1), nlp.ineq_jac(z2)
    cols = np.concatenate([np.arange(nlp.n_fe + 1) * NX, np.arange(nlp.n_fe + 1) * NX + 1])
    assert np.array_equal(J1[:, cols], J2[:, cols])
    # and the rows move exactly linearly
    dz = z2 - z1
    assert np.allclose(nlp.ineq(z2) - nlp.ineq(z1), J1 @ dz, atol=1e-12)


def test_audit_flags_knot_outside_box(case2):
    sc, _, tunnels, nlp = case2
    z = nlp.x0.copy()
    k = nlp.knots(z)
    box = tunnels[0].boxes[30]
    k[30, 0] += 2.0 * (box.length + box.width)
    audit = verify_solution(sc, z, nlp)
    assert not audit.passed
    assert audit.tunnel_violations and all(r // 8 == 30 for r in audit.tunnel_violations)


def test_solved_case2_audit(solved):
    report = solved("case2")
    assert report.audit.passed
    assert report.audit.min_obstacle_clearance > 0.0


def test_retime_replays_path(case2):
    *_, nlp = case2
    z = retime(nlp.x0, 2.0, nlp.n_fe)
    k0, k1 = nlp.knots(nlp.x0), nlp.knots(z)
    assert np.array_equal(k1[:, :3], k0[:, :3]) and np.array_equal(k1[:, 4], k0[:, 4])
    assert np.allclose(k1[:, 3], k0[:, 3] / 2) and np.allclose(k1[:, 5], k0[:, 5] / 4)
    assert z[-1] == 2.0 * nlp.x0[-1]
    # the Euler defects of the pose rows are invariant under the retime
    assert np.allclose(nlp.eq(z)[:5 * nlp.n_fe].reshape(-1, 5)[:, :3],
                       nlp.eq(nlp.x0)[:5 * nlp.n_fe].reshape(-1, 5)[:, :3], atol=1e-12)
    with pytest.raises(ValueError):
        retime(nlp.x0, 0.0, nlp.n_fe)
