"""Dense convex QP by the Goldfarb-Idnani dual active-set method.

Solves::

    min  0.5 x'Hx + g'x
    s.t. A_eq x  = b_eq
         A_in x >= b_in
         lb <= x <= ub

``H`` must be symmetric positive definite. The method starts from the
unconstrained minimizer and adds violated constraints one at a time, so no
phase-one feasible point is needed; equalities are never dropped once added.
Equalities (and optionally a predicted active set) enter first through one QR
factorization; afterwards the most violated row, relative to its own scale,
enters next.

When the constraints are inconsistent a restoration solve relaxes every
violated row by a single shared elastic variable ``xi`` in ``[0, 1]``
(``A x >= (1 - xi) b`` form around ``x = 0``) priced by ``elastic_weight``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, qr, solve_triangular

from .._backend import kernels


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class QpResult:
    x: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    status: QpStatus
    iterations: int
    relaxed: bool = False
    xi: float = 0.0
    violation: float = 0.0

    @property
    def active_in(self) -> np.ndarray:
        return np.nonzero(self.lam_in > 0.0)[0]


class _Infeasible(Exception):
    pass


def _as2d(a, n):
    if a is None:
        return np.zeros((0, n))
    return np.atleast_2d(np.asarray(a, dtype=float)).reshape(-1, n)


def _as1d(b, m):
    if b is None:
        return np.zeros(m)
    return np.asarray(b, dtype=float).reshape(m)


class _DualActiveSet:
    """One Goldfarb-Idnani solve; state kept on the instance for clarity."""

    def __init__(self, H, g, A_eq, b_eq, A_in, b_in, lb, ub, max_iter, tol):
        n = len(g)
        self.n = n
        self.g = g
        self.A_eq, self.b_eq = A_eq, b_eq
        self.A_in, self.b_in = A_in, b_in
        self.m_eq, self.m_in = len(b_eq), len(b_in)
        self.lb_idx = np.nonzero(np.isfinite(lb))[0]
        self.ub_idx = np.nonzero(np.isfinite(ub))[0]
        self.lb, self.ub = lb, ub
        self.max_iter = max_iter
        self.tol = tol
        self.roundoff = 1e-8
        L = cholesky(H, lower=True)
        self.J = np.ascontiguousarray(solve_triangular(L, np.eye(n), lower=True).T)  # J J' = H^-1
        self.R = np.zeros((n, n))
        self.q = 0
        self.active: list[int] = []
        self.signs: list[float] = []
        self.u = np.zeros(0)
        self.iterations = 0
        self.n_lb = len(self.lb_idx)
        self.m_total = self.m_eq + self.m_in + self.n_lb + len(self.ub_idx)
        self._row_norm = np.concatenate([
            np.abs(A_eq).max(axis=1, initial=0.0), np.abs(A_in).max(axis=1, initial=0.0),
            np.ones(self.n_lb + len(self.ub_idx))])
        self._rhs_abs = np.concatenate([np.abs(b_eq), np.abs(b_in), np.abs(lb[self.lb_idx]),
                                        np.abs(ub[self.ub_idx])])

    # constraint access -------------------------------------------------------

    def _normal(self, j):
        """Dense normal and rhs of constraint ``j`` in ``n'x >= b`` / ``= b`` form."""
        if j < self.m_eq:
            return self.A_eq[j], self.b_eq[j]
        j -= self.m_eq
        if j < self.m_in:
            return self.A_in[j], self.b_in[j]
        j -= self.m_in
        e = np.zeros(self.n)
        if j < self.n_lb:
            i = self.lb_idx[j]
            e[i] = 1.0
            return e, self.lb[i]
        i = self.ub_idx[j - self.n_lb]
        e[i] = -1.0
        return e, -self.ub[i]

    def _slacks(self, x):
        parts = [self.A_eq @ x - self.b_eq, self.A_in @ x - self.b_in,
                 x[self.lb_idx] - self.lb[self.lb_idx], self.ub[self.ub_idx] - x[self.ub_idx]]
        return np.concatenate(parts)

    def _scales(self, x):
        xs = 1.0 + np.max(np.abs(x), initial=0.0)
        return self.tol * (1.0 + self._row_norm * xs + self._rhs_abs)

    # factorization updates ---------------------------------------------------

    def _add(self, d):
        q, n = self.q, self.n
        v = d[q:].copy()
        norm = np.linalg.norm(v)
        alpha = -norm if v[0] >= 0.0 else norm
        v[0] -= alpha
        vv = v @ v
        if vv > 0.0:
            Jq = self.J[:, q:]
            Jq -= np.outer(Jq @ v, v * (2.0 / vv))
        self.R[:q, q] = d[:q]
        self.R[q, q] = alpha
        self.q = q + 1

    def _drop(self, k):
        kernels.givens_drop(self.R, self.J, k, self.q)
        self.q -= 1
        del self.active[k]
        del self.signs[k]

    # main loop -----------------------------------------------------------------

    def _rows(self, idx, signs):
        N = np.array([self._normal(j)[0] for j in idx]) * np.asarray(signs)[:, None]
        b = np.array([self._normal(j)[1] for j in idx]) * np.asarray(signs)
        return N, b

    def _start(self, x_unc, hint, is_active):
        """Enter the equalities plus the hinted rows through one QR.

        Hinted inequalities whose multipliers come out negative are dropped
        (most negative first) until the start is dual feasible. Returns the
        starting point, or ``None`` when the rows are rank deficient.
        """
        idx = list(range(self.m_eq)) + [int(j) for j in hint if j >= self.m_eq]
        m = len(idx)
        if m == 0:
            return x_unc
        if m > self.n:
            return None
        signs = [1.0] * m
        N, _ = self._rows(idx, signs)
        Q, R = qr(self.J.T @ N.T)
        diag = np.abs(np.diag(R[:m]))
        if diag.min() <= 1e-10 * max(1.0, diag.max()):
            return None
        self.J = np.ascontiguousarray(self.J @ Q)
        self.R[:m, :m] = R[:m]
        self.q = m
        self.active = idx
        self.signs = signs
        is_active[idx] = True
        self.iterations += m
        while True:
            q = self.q
            if q == 0:
                self.u = np.zeros(0)
                return x_unc
            N, b = self._rows(self.active, self.signs)
            w = solve_triangular(self.R[:q, :q], b - N @ x_unc, trans="T", lower=False,
                                 check_finite=False)
            u = solve_triangular(self.R[:q, :q], w, lower=False, check_finite=False)
            x = x_unc + self.J[:, :q] @ w
            k = self.m_eq + int(np.argmin(u[self.m_eq:])) if q > self.m_eq else -1
            if k < 0 or u[k] >= 0.0:
                self.u = u
                return x
            is_active[self.active[k]] = False
            self._drop(k)

    def solve(self, hint=()):
        J = self.J
        x = -(J @ (J.T @ self.g))
        is_active = np.zeros(self.m_total, dtype=bool)
        started = None
        if self.m_eq or len(hint):
            started = self._start(x, hint, is_active)
            if started is None and len(hint):
                # rank-deficient hint: restart from the equalities alone
                self.J = J
                self.R[:] = 0.0
                self.q, self.active, self.signs = 0, [], []
                is_active[:] = False
                started = self._start(x, (), is_active)
            if started is None:
                self.J = J
                self.R[:] = 0.0
                self.q, self.active, self.signs = 0, [], []
                self.u = np.zeros(0)
                is_active[:] = False
        if started is not None:
            x = started
        # rows found dependent on the active set while violated only by roundoff
        skipped = np.zeros(self.m_total, dtype=bool)
        while True:
            s = self._slacks(x)
            tol = self._scales(x)
            viol = np.zeros(self.m_total, dtype=bool)
            viol[:self.m_eq] = np.abs(s[:self.m_eq]) > tol[:self.m_eq]
            viol[self.m_eq:] = s[self.m_eq:] < -tol[self.m_eq:]
            viol &= ~(is_active | skipped)
            cand = np.flatnonzero(viol)
            if len(cand) == 0:
                return np.clip(x, self.lb, self.ub)
            # most violated row first, measured against its own scale
            norm = self._row_norm[cand]
            rel = np.divide(np.abs(s[cand]), norm, out=np.full(len(cand), np.inf), where=norm > 0.0)
            p = int(cand[np.argmax(rel)])
            normal, rhs = self._normal(p)
            sign = 1.0
            if p < self.m_eq and s[p] > 0.0:
                sign = -1.0
            normal = sign * normal
            sp = sign * s[p]
            u_plus = np.append(self.u, 0.0)
            while True:
                self.iterations += 1
                if self.iterations > self.max_iter:
                    raise RuntimeError("QP iteration limit reached")
                q = self.q
                d = self.J.T @ normal
                z = self.J[:, q:] @ d[q:]
                r = solve_triangular(self.R[:q, :q], d[:q], lower=False, check_finite=False) if q else np.zeros(0)
                t1, k_drop = math.inf, -1
                for idx in range(q):
                    if self.active[idx] >= self.m_eq and r[idx] > 0.0:
                        ratio = u_plus[idx] / r[idx]
                        if ratio < t1:
                            t1, k_drop = ratio, idx
                zn = z @ normal
                t2 = math.inf
                if zn > 1e-14 * (1.0 + normal @ normal) and np.linalg.norm(z) > 1e-14:
                    t2 = -sp / zn
                t = min(t1, t2)
                if math.isinf(t):
                    if -sp <= self.roundoff * (1.0 + abs(rhs)):
                        skipped[p] = True
                        self.u = u_plus[:q]
                        break
                    raise _Infeasible()
                u_plus[:q] -= t * r
                u_plus[q] += t
                if math.isinf(t2):
                    is_active[self.active[k_drop]] = False
                    u_plus = np.delete(u_plus, k_drop)
                    self._drop(k_drop)
                    continue
                x = x + t * z
                sp += t * zn
                if t2 <= t1:
                    self._add(d)
                    self.active.append(p)
                    self.signs.append(sign)
                    is_active[p] = True
                    self.u = u_plus
                    break
                is_active[self.active[k_drop]] = False
                u_plus = np.delete(u_plus, k_drop)
                self._drop(k_drop)

    def hint_from(self, active) -> list[int]:
        """Constraint indices for ``(act_in, act_lb, act_ub)`` boolean masks."""
        act_in, act_lb, act_ub = (np.asarray(a, dtype=bool) for a in active)
        base = self.m_eq + self.m_in
        lb_pos = np.full(self.n, -1)
        lb_pos[self.lb_idx] = np.arange(self.n_lb)
        ub_pos = np.full(self.n, -1)
        ub_pos[self.ub_idx] = np.arange(len(self.ub_idx))
        hint = list(self.m_eq + np.flatnonzero(act_in))
        hint += [base + p for p in lb_pos[act_lb] if p >= 0]
        hint += [base + self.n_lb + p for p in ub_pos[act_ub & ~act_lb] if p >= 0]
        return [int(h) for h in hint]

    def multipliers(self):
        lam = np.zeros(self.m_total)
        for pos, j in enumerate(self.active):
            lam[j] = self.signs[pos] * self.u[pos]
        m1 = self.m_eq
        m2 = m1 + self.m_in
        m3 = m2 + self.n_lb
        lam_lb = np.zeros(self.n)
        lam_ub = np.zeros(self.n)
        lam_lb[self.lb_idx] = lam[m2:m3]
        lam_ub[self.ub_idx] = lam[m3:]
        return lam[:m1], lam[m1:m2], lam_lb, lam_ub


def _violation(x, A_eq, b_eq, A_in, b_in, lb, ub):
    parts = [np.abs(A_eq @ x - b_eq), np.maximum(b_in - A_in @ x, 0.0),
             np.maximum(lb - x, 0.0), np.maximum(x - ub, 0.0)]
    return float(max((np.max(p, initial=0.0) for p in parts), default=0.0))


def solve_qp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None, lb=None, ub=None, *,
             max_iter: int | None = None, tol: float = 1e-11, tol_feas: float = 1e-6,
             elastic_weight: float = 1e6, elastic: bool = True, active=None) -> QpResult:
    """Solve a strictly convex QP; see the module docstring for the form.

    Multipliers follow ``H x + g = A_eq' lam_eq + A_in' lam_in + lam_lb - lam_ub``
    with ``lam_in, lam_lb, lam_ub >= 0``. ``active`` optionally names a
    predicted active set as boolean masks ``(in, lb, ub)``; those rows are
    entered first, which only changes the work done, not the solution.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    n = len(g)
    A_eq = _as2d(A_eq, n)
    A_in = _as2d(A_in, n)
    b_eq = _as1d(b_eq, len(A_eq))
    b_in = _as1d(b_in, len(A_in))
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).ravel()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).ravel()
    if np.any(lb > ub):
        raise ValueError("lb > ub")
    limit = max_iter or 20 * (n + len(b_eq) + len(b_in)) + 100

    solver = _DualActiveSet(H, g, A_eq, b_eq, A_in, b_in, lb, ub, limit, tol)
    try:
        x = solver.solve(solver.hint_from(active) if active is not None else ())
    except _Infeasible:
        if not elastic:
            return QpResult(np.zeros(n), np.zeros(len(b_eq)), np.zeros(len(b_in)), np.zeros(n),
                            np.zeros(n), QpStatus.INFEASIBLE, solver.iterations, violation=math.inf)
        return _restore(H, g, A_eq, b_eq, A_in, b_in, lb, ub, limit, tol, tol_feas,
                        elastic_weight, solver.iterations)
    lam_eq, lam_in, lam_lb, lam_ub = solver.multipliers()
    return QpResult(x, lam_eq, lam_in, lam_lb, lam_ub, QpStatus.OPTIMAL, solver.iterations,
                    violation=_violation(x, A_eq, b_eq, A_in, b_in, lb, ub))


def _restore(H, g, A_eq, b_eq, A_in, b_in, lb, ub, limit, tol, tol_feas, weight, used):
    """Shared-slack elastic solve around ``x = 0``.

    Rows violated at ``x = 0`` have their right-hand side scaled by
    ``(1 - xi)``; ``xi = 1`` makes ``x = 0`` feasible whenever the simple
    bounds admit it, so the relaxed QP is always consistent.
    """
    n = len(g)
    x0 = np.clip(np.zeros(n), lb, ub)
    viol_in = (A_in @ x0 - b_in) < 0.0
    He = np.zeros((n + 1, n + 1))
    He[:n, :n] = H
    He[n, n] = max(1e-8, 1e-8 * weight)
    ge = np.append(g, weight)
    Ae = np.hstack([A_eq, (b_eq - A_eq @ x0)[:, None]])
    Ai = np.hstack([A_in, np.where(viol_in, b_in - A_in @ x0, 0.0)[:, None]])
    lbe = np.append(lb, 0.0)
    ube = np.append(ub, 1.0)
    # rows read A x + xi (b - A x0) >= b, so xi = 1 admits the bound-projected origin
    solver = _DualActiveSet(He, ge, Ae, b_eq, Ai, b_in, lbe, ube, limit, tol)
    try:
        xe = solver.solve()
    except _Infeasible:
        return QpResult(np.zeros(n), np.zeros(len(b_eq)), np.zeros(len(b_in)), np.zeros(n),
                        np.zeros(n), QpStatus.INFEASIBLE, used + solver.iterations,
                        relaxed=True, xi=1.0, violation=math.inf)
    lam_eq, lam_in, lam_lb, lam_ub = solver.multipliers()
    x = xe[:n]
    viol = _violation(x, A_eq, b_eq, A_in, b_in, lb, ub)
    status = QpStatus.OPTIMAL if viol <= tol_feas else QpStatus.INFEASIBLE
    return QpResult(x, lam_eq, lam_in, lam_lb[:n], lam_ub[:n], status, used + solver.iterations,
                    relaxed=True, xi=float(xe[n]), violation=viol)
