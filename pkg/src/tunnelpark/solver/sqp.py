"""Line-search SQP with an L1 exact-penalty merit.

The QP model uses either a damped BFGS approximation or the exact Lagrangian
Hessian, convexified on the constraint null space when it is indefinite.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Protocol, TextIO

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .qp import QpStatus, solve_qp


class Nlp(Protocol):
    """Evaluator interface the solver needs.

    Constraints read ``eq(z) = 0`` and ``ineq(z) >= 0`` with simple bounds
    ``lb <= z <= ub``. ``lagrangian_hessian`` is optional and only used in
    exact-Hessian mode; it returns the Hessian of
    ``cost - lam_eq' eq - lam_in' ineq``.
    """

    n: int
    m_eq: int
    m_in: int
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray

    def cost(self, z) -> float: ...
    def cost_grad(self, z) -> np.ndarray: ...
    def eq(self, z) -> np.ndarray: ...
    def eq_jac(self, z) -> np.ndarray: ...
    def ineq(self, z) -> np.ndarray: ...
    def ineq_jac(self, z) -> np.ndarray: ...


@dataclass
class FunctionNlp:
    """Small NLP assembled from plain callables; handy for tests and examples."""

    f: Callable
    grad: Callable
    x0: np.ndarray
    eq_fun: Optional[Callable] = None
    eq_jac_fun: Optional[Callable] = None
    ineq_fun: Optional[Callable] = None
    ineq_jac_fun: Optional[Callable] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    hess_fun: Optional[Callable] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = len(self.x0)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        self.m_eq = len(self.eq(self.x0))
        self.m_in = len(self.ineq(self.x0))

    @property
    def n(self) -> int:
        return len(self.x0)

    def cost(self, z):
        return float(self.f(z))

    def cost_grad(self, z):
        return np.asarray(self.grad(z), dtype=float)

    def eq(self, z):
        return np.zeros(0) if self.eq_fun is None else np.atleast_1d(np.asarray(self.eq_fun(z), float))

    def eq_jac(self, z):
        if self.eq_fun is None:
            return np.zeros((0, len(z)))
        return np.atleast_2d(np.asarray(self.eq_jac_fun(z), float))

    def ineq(self, z):
        return np.zeros(0) if self.ineq_fun is None else np.atleast_1d(np.asarray(self.ineq_fun(z), float))

    def ineq_jac(self, z):
        if self.ineq_fun is None:
            return np.zeros((0, len(z)))
        return np.atleast_2d(np.asarray(self.ineq_jac_fun(z), float))

    def lagrangian_hessian(self, z, lam_eq, lam_in):
        return np.asarray(self.hess_fun(z, lam_eq, lam_in), dtype=float)


class SolveStatus(enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    LINE_SEARCH_FAIL = "LINE_SEARCH_FAIL"
    QP_INFEASIBLE = "QP_INFEASIBLE"


class HessianMode(enum.Enum):
    BFGS = "bfgs"
    EXACT = "exact"


@dataclass(frozen=True)
class SqpConfig:
    max_iter: int = 200
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-6
    merit_penalty_init: float = 1.0
    hessian_reg_min: float = 1e-8
    line_search_backtrack: float = 0.5
    max_ls_steps: int = 30
    hessian: HessianMode = HessianMode.BFGS
    armijo: float = 1e-4
    elastic_weight: float = 1e6
    second_order_correction: bool = True
    newton_refinement: bool = True
    curvature_floor: float = 1e-3

    def __post_init__(self):
        if self.max_iter < 0 or self.max_ls_steps < 1:
            raise ValueError("iteration limits must be positive")
        for name in ("tol_kkt", "tol_feas", "merit_penalty_init", "hessian_reg_min", "elastic_weight"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.line_search_backtrack < 1.0:
            raise ValueError("line_search_backtrack must lie in (0, 1)")
        object.__setattr__(self, "hessian", HessianMode(self.hessian))


class IterationRecord(NamedTuple):
    iteration: int
    cost: float
    feasibility: float
    kkt: float
    step: float
    merit_before: float
    merit_after: float


@dataclass
class SolveResult:
    z_opt: np.ndarray
    status: SolveStatus
    iterations: int
    kkt_residual: float
    feasibility_residual: float
    complementarity: float
    cost: float
    lam_eq: np.ndarray = field(repr=False, default=None)
    lam_in: np.ndarray = field(repr=False, default=None)
    history: list = field(repr=False, default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass
class _Point:
    z: np.ndarray
    f: float
    g: np.ndarray
    ce: np.ndarray
    ci: np.ndarray
    Je: np.ndarray = None
    Ji: np.ndarray = None


def _evaluate(nlp, z, jac=True) -> _Point:
    p = _Point(z, nlp.cost(z), None, nlp.eq(z), nlp.ineq(z))
    if jac:
        p.g = nlp.cost_grad(z)
        p.Je = nlp.eq_jac(z)
        p.Ji = nlp.ineq_jac(z)
    return p


def _l1_violation(ce, ci) -> float:
    return float(np.abs(ce).sum() + np.maximum(-ci, 0.0).sum())


def _max_violation(ce, ci) -> float:
    return float(max(np.max(np.abs(ce), initial=0.0), np.max(-ci, initial=0.0), 0.0))


def _kkt_measures(pt: _Point, lam_eq, lam_in, lb, ub):
    """Projected Lagrangian gradient and complementarity at ``pt``.

    Variables sitting on a bound may carry a gradient component pushing
    outward; that part is absorbed by the bound multiplier and not counted.
    """
    r = pt.g - pt.Je.T @ lam_eq - pt.Ji.T @ lam_in
    z = pt.z
    with np.errstate(invalid="ignore"):
        at_lb = z <= lb + 1e-9 * (1.0 + np.abs(lb))
        at_ub = z >= ub - 1e-9 * (1.0 + np.abs(ub))
    proj = np.where(at_lb, np.minimum(r, 0.0), r)
    proj = np.where(at_ub, np.maximum(proj, 0.0), proj)
    proj = np.where(at_lb & at_ub, 0.0, proj)
    kkt = float(np.max(np.abs(proj), initial=0.0))
    comp = float(np.max(np.abs(lam_in * pt.ci), initial=0.0))
    return kkt, comp


def _regularize(B: np.ndarray, reg_min: float) -> np.ndarray:
    """Smallest ``B + delta I`` (delta >= reg_min, grown tenfold) that is Cholesky-factorizable."""
    n = len(B)
    delta = reg_min
    eye = np.eye(n)
    while True:
        H = B + delta * eye
        try:
            np.linalg.cholesky(H)
            return H
        except np.linalg.LinAlgError:
            delta *= 10.0
            if delta > 1e12:
                return eye


def _is_pd(H: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


def _convexify(W: np.ndarray, Je: np.ndarray, reg_min: float,
               floor: float) -> tuple[np.ndarray, float]:
    """Positive definite stand-in for an indefinite Lagrangian Hessian.

    ``Je`` stacks the equality rows and the bounds expected to stay pinned.
    Adding ``sigma Je'Je`` leaves the QP minimizer unchanged while those rows
    hold with equality and removes curvature defects transverse to them.
    Eigenvalues still below ``floor`` are raised to it; positive curvature
    above the floor is kept exactly, so well-modelled directions still get
    Newton steps while negatively curved ones get long, cheap steps that the
    line search trims. Returns ``(H, sigma)``; multipliers of the stacked rows
    come out shifted by ``sigma * (Je d)``.
    """
    eye = np.eye(len(W))
    H = W + reg_min * eye
    if _is_pd(H):
        return H, 0.0
    sigma = 0.0
    if len(Je):
        sigma = 1e3 * max(1.0, float(np.max(np.abs(W))))
        W = W + sigma * (Je.T @ Je)
        H = W + reg_min * eye
        if _is_pd(H):
            return H, sigma
    lam, V = np.linalg.eigh(W)
    lam = np.maximum(lam, max(floor, reg_min))
    H = (V * lam) @ V.T
    return 0.5 * (H + H.T), sigma


def _eqp_step(W, g, A, r, fixed, fixed_val, reg_min):
    """Newton step on a working set: ``min 1/2 d'Wd + g'd`` s.t. ``A d = r``, ``d[fixed] = fixed_val``.

    ``W`` may be indefinite; the step is returned only when the Hessian
    reduced to the working set's null space is positive definite, which is
    checked by a Cholesky factorization of ``W + sigma A'A``. Returns
    ``(d, y)`` with ``W d + g = A'y`` on the free variables, or ``None``.
    """
    free = ~fixed
    d = np.zeros(len(g))
    d[fixed] = fixed_val
    Af = A[:, free]
    Wf = W[np.ix_(free, free)]
    gf = g[free] + W[np.ix_(free, fixed)] @ fixed_val
    rf = r - A[:, fixed] @ fixed_val
    sigma = 1e3 * max(1.0, float(np.max(np.abs(Wf), initial=0.0)))
    try:
        cf = cho_factor(Wf + sigma * (Af.T @ Af) + reg_min * np.eye(len(gf)))
    except np.linalg.LinAlgError:
        return None
    # the augmentation leaves the equality-constrained minimizer unchanged;
    # solve the KKT system through its Schur complement
    HiA = cho_solve(cf, Af.T)
    Hig = cho_solve(cf, gf)
    S = Af @ HiA
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(Hig))):
        return None
    try:
        y = np.linalg.lstsq(S, rf + Af @ Hig, rcond=1e-12)[0]
    except np.linalg.LinAlgError:
        return None
    df = HiA @ y - Hig
    d[free] = df
    return d, y - sigma * (Af @ df)


def _damped_bfgs(B, s, y):
    """Powell-damped BFGS update; returns ``None`` on breakdown."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if not (sBs > 1e-16 * (1.0 + s @ s)):
        return None
    sy = float(s @ y)
    if sy >= 0.2 * sBs:
        r = y
    else:
        theta = 0.8 * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if not (sr > 0.0) or not np.all(np.isfinite(r)):
        return None
    return B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr


def _refine(W, pt, qp, d_qp, lb, ub, reg_min):
    """Bend the convex QP step toward the exact-Hessian Newton step on its active set.

    The convexified QP identifies the active set reliably but its modified
    curvature slows convergence. The Newton step is blended in as far as the
    linearized inactive rows and the bounds allow.
    """
    act = qp.lam_in > 0.0
    fixed = (qp.lam_lb > 0.0) | (qp.lam_ub > 0.0)
    A = np.vstack([pt.Je, pt.Ji[act]])
    r = -np.concatenate([pt.ce, pt.ci[act]])
    step = _eqp_step(W, pt.g, A, r, fixed, d_qp[fixed], reg_min)
    if step is None:
        return d_qp
    e = step[0] - d_qp
    # largest beta in [0, 1] keeping the blended step inside every linearization
    beta = 1.0
    lo, hi = lb - pt.z, ub - pt.z
    rows = ~act
    lin = pt.ci[rows] + pt.Ji[rows] @ d_qp
    rate = pt.Ji[rows] @ e
    shrink = rate < 0.0
    if np.any(shrink):
        beta = min(beta, float(np.min(np.maximum(lin[shrink], 0.0) / -rate[shrink])))
    for bound, sign in ((lo, -1.0), (hi, 1.0)):
        room = sign * (bound - d_qp)
        push = sign * e > 0.0
        if np.any(push):
            beta = min(beta, float(np.min(np.maximum(room[push], 0.0) / (sign * e[push]))))
    return d_qp + max(beta, 0.0) * e


def solve(nlp: Nlp, cfg: SqpConfig = SqpConfig(), x0=None, log: Optional[TextIO] = None) -> SolveResult:
    """Minimize ``nlp`` from ``x0`` (default ``nlp.x0``, clamped into the bounds)."""
    lb = np.asarray(nlp.lb, dtype=float)
    ub = np.asarray(nlp.ub, dtype=float)
    z = np.clip(np.asarray(nlp.x0 if x0 is None else x0, dtype=float), lb, ub)
    n = len(z)
    pt = _evaluate(nlp, z)
    B = np.eye(n)
    bfgs_fresh = True
    rho = cfg.merit_penalty_init
    lam_eq = np.zeros(len(pt.ce))
    lam_in = np.zeros(len(pt.ci))
    act_bd = np.zeros(n, dtype=bool)
    working = None  # last sound QP active set, used to hot-start the next QP
    history = []

    def result(status, it, kkt, comp):
        return SolveResult(pt.z.copy(), status, it, kkt, _max_violation(pt.ce, pt.ci), comp, pt.f,
                           lam_eq, lam_in, history)

    kkt = comp = math.inf
    for it in range(cfg.max_iter + 1):
        if cfg.hessian is HessianMode.EXACT:
            pinned = act_bd & ((pt.z <= lb) | (pt.z >= ub))
            W = nlp.lagrangian_hessian(pt.z, lam_eq, lam_in)
            H, sigma = _convexify(W, np.vstack([pt.Je, np.eye(n)[pinned]]),
                                  cfg.hessian_reg_min, cfg.curvature_floor)
        else:
            H, sigma = _regularize(B, cfg.hessian_reg_min), 0.0
        qp = solve_qp(H, pt.g, pt.Je, -pt.ce, pt.Ji, -pt.ci, lb - pt.z, ub - pt.z,
                      tol_feas=cfg.tol_feas, elastic_weight=cfg.elastic_weight, active=working)
        if sigma:
            # undo the augmentation's contribution to the stationarity condition
            qp.lam_eq = qp.lam_eq - sigma * (pt.Je @ qp.x)
        feas = _max_violation(pt.ce, pt.ci)
        if qp.relaxed and qp.xi >= 1.0 - 1e-9 and feas > cfg.tol_feas:
            return result(SolveStatus.QP_INFEASIBLE, it, kkt, comp)
        if not qp.relaxed:
            kkt, comp = _kkt_measures(pt, qp.lam_eq, qp.lam_in, lb, ub)
            if feas <= cfg.tol_feas and kkt <= cfg.tol_kkt and comp <= cfg.tol_kkt:
                lam_eq, lam_in = qp.lam_eq, qp.lam_in
                history.append(IterationRecord(it, pt.f, feas, kkt, 0.0, math.nan, math.nan))
                if log is not None:
                    log.write(f"{it:4d} cost={pt.f:.10g} feas={feas:.3e} kkt={kkt:.3e} step=0\n")
                return result(SolveStatus.CONVERGED, it, kkt, comp)
        if it == cfg.max_iter:
            break

        d = qp.x
        mult = max(np.max(np.abs(qp.lam_eq), initial=0.0), np.max(qp.lam_in, initial=0.0))
        if not qp.relaxed and rho <= mult:
            rho = max(1.5 * mult, rho * 2.0)
        viol1 = _l1_violation(pt.ce, pt.ci)
        merit0 = pt.f + rho * viol1

        def slope_along(step):
            # first-order model change of the merit along the step
            lin_viol = _l1_violation(pt.ce + pt.Je @ step, pt.ci + pt.Ji @ step)
            sl = float(pt.g @ step) + rho * (lin_viol - viol1)
            return sl if sl < 0.0 else -0.5 * float(step @ H @ step)

        noise = min(1e-12, 1e-13 * max(1.0, abs(merit0)))

        def acceptable(tp, alpha, sl):
            merit = tp.f + rho * _l1_violation(tp.ce, tp.ci)
            if not np.isfinite(merit):
                return False
            if -alpha * sl <= noise:
                # the predicted decrease is at roundoff level; the merit cannot resolve it
                return merit <= merit0 + noise
            return merit <= merit0 + cfg.armijo * alpha * sl and merit < merit0 + 1e-12

        def full_step(step):
            """Full step, then its second-order correction; the accepted point or None."""
            sl = slope_along(step)
            trial = np.clip(pt.z + step, lb, ub)
            tp = _evaluate(nlp, trial, jac=False)
            if acceptable(tp, 1.0, sl):
                return trial
            if qp.relaxed or not cfg.second_order_correction:
                return None
            # keep the model, but shift the constraints by their curvature along the step
            soc = solve_qp(H, pt.g, pt.Je, -(tp.ce - pt.Je @ step), pt.Ji, -(tp.ci - pt.Ji @ step),
                           lb - pt.z, ub - pt.z, tol_feas=cfg.tol_feas, elastic=False,
                           active=(qp.lam_in > 0.0, qp.lam_lb > 0.0, qp.lam_ub > 0.0))
            if soc.status is not QpStatus.OPTIMAL:
                return None
            trial = np.clip(pt.z + soc.x, lb, ub)
            return trial if acceptable(_evaluate(nlp, trial, jac=False), 1.0, sl) else None

        alpha = 1.0
        accepted = None
        if cfg.hessian is HessianMode.EXACT and cfg.newton_refinement and not qp.relaxed and sigma:
            d_newton = _refine(W, pt, qp, d, lb, ub, cfg.hessian_reg_min)
            if d_newton is not d:
                accepted = full_step(d_newton)
        if accepted is None:
            accepted = full_step(d)
        if accepted is None:
            slope = slope_along(d)
            for _ in range(cfg.max_ls_steps - 1):
                alpha *= cfg.line_search_backtrack
                trial = np.clip(pt.z + alpha * d, lb, ub)
                if acceptable(_evaluate(nlp, trial, jac=False), alpha, slope):
                    accepted = trial
                    break
        if accepted is None:
            return result(SolveStatus.LINE_SEARCH_FAIL, it, kkt, comp)

        new = _evaluate(nlp, accepted)
        merit1 = new.f + rho * _l1_violation(new.ce, new.ci)
        if not qp.relaxed:
            # relaxed multipliers scale with the elastic weight; keep the last sound pair
            lam_eq, lam_in = qp.lam_eq, qp.lam_in
            act_bd = (qp.lam_lb > 0.0) | (qp.lam_ub > 0.0)
            working = (qp.lam_in > 0.0, qp.lam_lb > 0.0, qp.lam_ub > 0.0)
        if cfg.hessian is HessianMode.BFGS:
            s = new.z - pt.z
            y = (new.g - new.Je.T @ lam_eq - new.Ji.T @ lam_in) - (pt.g - pt.Je.T @ lam_eq - pt.Ji.T @ lam_in)
            if bfgs_fresh:
                sy, yy = float(s @ y), float(y @ y)
                if sy > 0.0 and yy > 0.0:
                    B = np.eye(n) * (yy / sy)
                bfgs_fresh = False
            upd = _damped_bfgs(B, s, y)
            if upd is None:
                B = np.eye(n)
                bfgs_fresh = True
            else:
                B = upd
        pt = new
        feas = _max_violation(pt.ce, pt.ci)
        history.append(IterationRecord(it, pt.f, feas, kkt, alpha, merit0, merit1))
        if log is not None:
            log.write(f"{it:4d} cost={pt.f:.10g} feas={feas:.3e} kkt={kkt:.3e} step={alpha:.3g}"
                      f"{' elastic' if qp.relaxed else ''} rho={rho:.3g}\n")
    return result(SolveStatus.MAX_ITER, cfg.max_iter, kkt, comp)
