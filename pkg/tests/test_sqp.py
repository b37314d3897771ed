import math
import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from tunnelpark.ocp import build_nlp
from tunnelpark.scenario import default_scenario, load_bundled
from tunnelpark.solver import FunctionNlp, HessianMode, SolveStatus, SqpConfig, solve

from test_ocp import stages

MODES = [HessianMode.BFGS, HessianMode.EXACT]


def rosenbrock_nlp():
    def f(z):
        return (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2

    def grad(z):
        return np.array([-2 * (1 - z[0]) - 400 * z[0] * (z[1] - z[0] ** 2), 200 * (z[1] - z[0] ** 2)])

    def hess(z, lam_eq, lam_in):
        H = np.array([[2 - 400 * (z[1] - 3 * z[0] ** 2), -400 * z[0]], [-400 * z[0], 200.0]])
        return H + 2.0 * lam_in[0] * np.eye(2)  # minus lam times the Hessian of 2 - |z|^2

    return FunctionNlp(f, grad, [0.0, 0.0], ineq_fun=lambda z: [2.0 - z @ z],
                       ineq_jac_fun=lambda z: [-2.0 * z], hess_fun=hess)


@pytest.mark.parametrize("mode", MODES)
def test_constrained_rosenbrock(mode):
    t0 = time.perf_counter()
    r = solve(rosenbrock_nlp(), SqpConfig(hessian=mode))
    assert time.perf_counter() - t0 < 1.0
    assert r.status is SolveStatus.CONVERGED
    assert np.allclose(r.z_opt, [1.0, 1.0], atol=1e-6)
    assert r.cost == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("mode", MODES)
def test_equality_qp(mode):
    nlp = FunctionNlp(lambda z: z @ z, lambda z: 2 * z, [5.0, -3.0],
                      eq_fun=lambda z: [z[0] + z[1] - 2.0], eq_jac_fun=lambda z: [[1.0, 1.0]],
                      hess_fun=lambda z, le, li: 2 * np.eye(2))
    r = solve(nlp, SqpConfig(hessian=mode))
    assert r.status is SolveStatus.CONVERGED and r.iterations <= 3
    assert np.allclose(r.z_opt, [1.0, 1.0], atol=1e-6)


def test_bound_constrained():
    nlp = FunctionNlp(lambda z: 0.5 * z @ z, lambda z: z, [3.0], lb=np.array([1.0]))
    r = solve(nlp)
    assert r.status is SolveStatus.CONVERGED and r.z_opt == pytest.approx([1.0])


def hs071():
    """Four variables, one product inequality, one sphere equality, box bounds."""
    def f(z):
        return z[0] * z[3] * (z[0] + z[1] + z[2]) + z[2]

    def grad(z):
        s = z[0] + z[1] + z[2]
        return np.array([z[3] * (s + z[0]), z[0] * z[3], z[0] * z[3] + 1.0, z[0] * s])

    return FunctionNlp(
        f, grad, [1.0, 5.0, 5.0, 1.0],
        eq_fun=lambda z: [z @ z - 40.0], eq_jac_fun=lambda z: [2.0 * z],
        ineq_fun=lambda z: [np.prod(z) - 25.0],
        ineq_jac_fun=lambda z: [[z[1] * z[2] * z[3], z[0] * z[2] * z[3], z[0] * z[1] * z[3], z[0] * z[1] * z[2]]],
        lb=np.ones(4), ub=5 * np.ones(4))


def test_hs071_against_scipy():
    nlp = hs071()
    r = solve(nlp)
    assert r.status is SolveStatus.CONVERGED
    assert r.cost == pytest.approx(17.0140173, abs=1e-6)
    ref = minimize(nlp.cost, nlp.x0, jac=nlp.cost_grad, method="SLSQP", bounds=[(1, 5)] * 4,
                   constraints=[{"type": "eq", "fun": nlp.eq, "jac": nlp.eq_jac},
                                {"type": "ineq", "fun": nlp.ineq, "jac": nlp.ineq_jac}],
                   options={"ftol": 1e-12, "maxiter": 500})
    assert np.allclose(r.z_opt, ref.x, atol=1e-5)


def _random_convex(seed, gap=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    c = rng.normal(size=n) * 2
    M = rng.normal(size=(n, n))
    Q = M @ M.T + np.eye(n)
    a = rng.normal(size=n)
    radius = rng.uniform(0.5, 2.0)
    if gap is not None:
        a *= 0.3 / (gap * radius * np.linalg.norm(a))
    nlp = FunctionNlp(lambda z: 0.5 * (z - c) @ Q @ (z - c) + np.sum(np.exp(0.1 * z)),
                      lambda z: Q @ (z - c) + 0.1 * np.exp(0.1 * z), np.zeros(n),
                      eq_fun=lambda z: [a @ z - 0.3], eq_jac_fun=lambda z: [a],
                      ineq_fun=lambda z: [radius ** 2 - z @ z], ineq_jac_fun=lambda z: [-2 * z])
    # the hyperplane meets the ball iff its distance from the origin is below the radius
    return nlp, 0.3 / np.linalg.norm(a) / radius


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_convex_problems_against_scipy(seed):
    nlp, gap = _random_convex(seed)
    assume(gap < 0.9)
    r = solve(nlp)
    assert r.status is SolveStatus.CONVERGED
    ref = minimize(nlp.cost, nlp.x0, jac=nlp.cost_grad, method="SLSQP",
                   constraints=[{"type": "eq", "fun": nlp.eq, "jac": nlp.eq_jac},
                                {"type": "ineq", "fun": nlp.ineq, "jac": nlp.ineq_jac}],
                   options={"ftol": 1e-14, "maxiter": 500})
    if ref.success:
        assert np.allclose(r.z_opt, ref.x, atol=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.1, 3.0))
def test_random_disjoint_constraints_never_converge(seed, gap):
    nlp, _ = _random_convex(seed, gap)
    with np.errstate(over="ignore"):  # far line-search trials overflow exp; merit rejects them
        r = solve(nlp)
    # the linearized ball constraint is a half-space, so the QPs can stay
    # consistent and the failure may surface in the line search instead
    assert r.status is not SolveStatus.CONVERGED
    viol = max(abs(float(nlp.eq(r.z_opt)[0])), -float(nlp.ineq(r.z_opt)[0]))
    assert r.feasibility_residual == pytest.approx(viol) and viol > 1e-6


def test_zero_motion_parking_converges_immediately():
    sc = default_scenario(goal=default_scenario().start)
    ref, tunnels = stages(sc)
    nlp = build_nlp(sc, tunnels, ref, sc.planner.n_fe)
    for mode in MODES:
        r = solve(nlp, SqpConfig(hessian=mode))
        assert r.status is SolveStatus.CONVERGED and r.iterations <= 1
        assert np.allclose(r.z_opt, nlp.x0, atol=1e-9)


@pytest.fixture(scope="module")
def case2_runs():
    sc = load_bundled("case2").with_planner(n_r=30, n_fe=30)
    ref, tunnels = stages(sc)
    nlp = build_nlp(sc, tunnels, ref, 30)
    cfg = SqpConfig(hessian=HessianMode.EXACT)
    return nlp, cfg, solve(nlp, cfg), solve(nlp, cfg)


def test_merit_descent(case2_runs):
    *_, r, _ = case2_runs
    steps = [h for h in r.history if not math.isnan(h.merit_before)]
    assert steps
    for h in steps:
        assert h.merit_after < h.merit_before + 1e-12


def test_converged_meets_tolerances(case2_runs):
    nlp, cfg, r, _ = case2_runs
    assert r.status is SolveStatus.CONVERGED
    assert r.feasibility_residual <= cfg.tol_feas
    assert r.kkt_residual <= cfg.tol_kkt and r.complementarity <= cfg.tol_kkt
    assert np.max(np.abs(nlp.eq(r.z_opt))) <= cfg.tol_feas
    assert np.min(nlp.ineq(r.z_opt)) >= -cfg.tol_feas


def test_bitwise_deterministic(case2_runs):
    *_, a, b = case2_runs
    assert np.array_equal(a.z_opt, b.z_opt)
    assert a.history == b.history


def test_max_iter_status():
    r = solve(rosenbrock_nlp(), SqpConfig(max_iter=2))
    assert r.status is SolveStatus.MAX_ITER and r.iterations == 2


def test_infeasible_linearization_reported():
    # x >= 1 and x <= -1 cannot both hold
    nlp = FunctionNlp(lambda z: z @ z, lambda z: 2 * z, [0.0],
                      ineq_fun=lambda z: [z[0] - 1.0, -1.0 - z[0]],
                      ineq_jac_fun=lambda z: [[1.0], [-1.0]])
    r = solve(nlp)
    assert r.status is not SolveStatus.CONVERGED


@pytest.mark.parametrize("kw", [dict(max_iter=-1), dict(tol_kkt=0.0), dict(line_search_backtrack=1.0),
                                dict(hessian="newton")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SqpConfig(**kw)
