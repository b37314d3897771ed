"""Free-final-time collocation NLP with within-tunnel constraints.

Decision vector layout (knot-major), for ``i = 0..N``::

    z[7*i:7*i+7] = [x_i, y_i, theta_i, v_i, phi_i, a_i, omega_i]
    z[7*(N+1)]   = t_f

Dynamics use explicit Euler on ``h = t_f / N``; the cost uses the matching
rectangle rule. Knot ``i`` keeps its front/rear disc centers inside box ``i``
of the front/rear tunnel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Sense, VehicleParams, disc_offsets, footprint_polygon, Pose
from .scenario import Scenario, wall_polygons
from .timing import ReferenceTrajectory
from .tunnel import Tunnel
from ._backend import kernels

NX = 7
X, Y, TH, V, PHI, A, OM = range(NX)
STATES = (X, Y, TH, V, PHI)
T_F_MIN = 0.1


class DimensionMismatch(ValueError):
    """``n_fe`` differs from the tunnels' ``n_r``."""


def dynamics_rhs(knot, veh: VehicleParams) -> np.ndarray:
    """Bicycle kinematics at one knot ``[x, y, theta, v, phi, a, omega]``.

    Returns ``d/dt (x, y, v, phi, theta)``, the conventional ordering of the
    model; the NLP itself stores states as ``(x, y, theta, v, phi)``.
    """
    _, _, th, v, phi, a, om = (float(k) for k in knot[:NX])
    return np.array([v * math.cos(th), v * math.sin(th), a, om, v * math.tan(phi) / veh.l_w])


def _tunnel_coefficients(tunnels, n: int):
    """Unit-normalized GREATER-form half-planes, shape ``(n + 1, 8, 3)``, and disc offsets index."""
    front, rear = tunnels
    if len(front) != n + 1 or len(rear) != n + 1:
        raise DimensionMismatch(
            f"tunnels have {len(front)}/{len(rear)} boxes but the NLP has {n + 1} knots")
    coef = np.empty((n + 1, 8, 3))
    for i in range(n + 1):
        for j, (tun, base) in enumerate(((front, 0), (rear, 4))):
            box = tun.boxes[i]
            if box.is_degenerate:
                raise ValueError(f"{tun.which.value} box {i} is degenerate")
            for q, hp in enumerate(tun.halfplanes[i]):
                sign = 1.0 if hp.sense is Sense.GREATER else -1.0
                norm = math.hypot(hp.a, hp.b)
                coef[i, base + q] = (sign * hp.a / norm, sign * hp.b / norm, sign * hp.c / norm)
    return coef


@dataclass
class ParkingNlp:
    """Discretized parking OCP evaluated densely with analytic derivatives."""

    n_fe: int
    veh: VehicleParams
    w1: float
    w2: float
    start: np.ndarray
    goal: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray
    tunnel_coef: np.ndarray
    tunnels: tuple = ()
    offsets: tuple = field(default=(0.0, 0.0))

    @property
    def n(self) -> int:
        return NX * (self.n_fe + 1) + 1

    @property
    def m_eq(self) -> int:
        return 5 * self.n_fe + 14

    @property
    def m_in(self) -> int:
        return 8 * (self.n_fe + 1)

    @property
    def tf_index(self) -> int:
        return NX * (self.n_fe + 1)

    def knots(self, z) -> np.ndarray:
        return np.asarray(z[:self.tf_index]).reshape(self.n_fe + 1, NX)

    # -- cost ---------------------------------------------------------------

    def cost(self, z) -> float:
        k = self.knots(z)[:-1]
        tf = z[self.tf_index]
        return float(tf + tf / self.n_fe * (self.w1 * k[:, A] @ k[:, A] + self.w2 * k[:, OM] @ k[:, OM]))

    def cost_grad(self, z) -> np.ndarray:
        k = self.knots(z)[:-1]
        tf = z[self.tf_index]
        h = tf / self.n_fe
        g = np.zeros(self.n)
        gk = g[:self.tf_index].reshape(self.n_fe + 1, NX)
        gk[:-1, A] = 2.0 * self.w1 * h * k[:, A]
        gk[:-1, OM] = 2.0 * self.w2 * h * k[:, OM]
        g[self.tf_index] = 1.0 + (self.w1 * k[:, A] @ k[:, A] + self.w2 * k[:, OM] @ k[:, OM]) / self.n_fe
        return g

    # -- equalities ---------------------------------------------------------

    def _rhs(self, k):
        th, v, phi = k[:, TH], k[:, V], k[:, PHI]
        return np.column_stack([v * np.cos(th), v * np.sin(th), v * np.tan(phi) / self.veh.l_w,
                                k[:, A], k[:, OM]])

    def eq(self, z) -> np.ndarray:
        k = self.knots(z)
        h = z[self.tf_index] / self.n_fe
        defects = k[1:, :5] - k[:-1, :5] - h * self._rhs(k[:-1])
        return np.concatenate([defects.ravel(), k[0] - self.start, k[-1] - self.goal])

    def eq_jac(self, z) -> np.ndarray:
        n_fe = self.n_fe
        k = self.knots(z)[:-1]
        h = z[self.tf_index] / n_fe
        jac = np.zeros((self.m_eq, self.n))
        rows = np.arange(n_fe) * 5
        cols = np.arange(n_fe) * NX
        for j in range(5):
            jac[rows + j, cols + j] = -1.0
            jac[rows + j, cols + NX + j] = 1.0
        th, v, phi = k[:, TH], k[:, V], k[:, PHI]
        c, s, t = np.cos(th), np.sin(th), np.tan(phi)
        lw = self.veh.l_w
        jac[rows + X, cols + TH] = h * v * s
        jac[rows + X, cols + V] = -h * c
        jac[rows + Y, cols + TH] = -h * v * c
        jac[rows + Y, cols + V] = -h * s
        jac[rows + TH, cols + V] = -h * t / lw
        jac[rows + TH, cols + PHI] = -h * v * (1.0 + t * t) / lw
        jac[rows + 3, cols + A] = -h
        jac[rows + 4, cols + OM] = -h
        jac[:5 * n_fe, self.tf_index] = -(self._rhs(k) / n_fe).ravel()
        base = 5 * n_fe
        for c_ in range(NX):
            jac[base + c_, c_] = 1.0
            jac[base + NX + c_, NX * n_fe + c_] = 1.0
        return jac

    # -- tunnel inequalities (>= 0) ------------------------------------------

    def _disc_points(self, k):
        off = np.array([self.offsets[0]] * 4 + [self.offsets[1]] * 4)
        c, s = np.cos(k[:, TH]), np.sin(k[:, TH])
        px = k[:, X, None] + off[None, :] * c[:, None]
        py = k[:, Y, None] + off[None, :] * s[:, None]
        return px, py, off, c, s

    def ineq(self, z) -> np.ndarray:
        k = self.knots(z)
        px, py, *_ = self._disc_points(k)
        co = self.tunnel_coef
        return (co[..., 0] * px + co[..., 1] * py + co[..., 2]).ravel()

    def ineq_jac(self, z) -> np.ndarray:
        k = self.knots(z)
        _, _, off, c, s = self._disc_points(k)
        co = self.tunnel_coef
        jac = np.zeros((self.m_in, self.n))
        rows = np.arange(self.m_in).reshape(self.n_fe + 1, 8)
        base = (np.arange(self.n_fe + 1) * NX)[:, None]
        jac[rows, base + X] = co[..., 0]
        jac[rows, base + Y] = co[..., 1]
        jac[rows, base + TH] = off[None, :] * (co[..., 1] * c[:, None] - co[..., 0] * s[:, None])
        return jac

    # -- second derivatives ---------------------------------------------------

    def lagrangian_hessian(self, z, lam_eq, lam_in) -> np.ndarray:
        """Hessian of ``f - lam_eq . eq - lam_in . ineq``."""
        n_fe = self.n_fe
        k = self.knots(z)
        tf = z[self.tf_index]
        h = tf / n_fe
        lw = self.veh.l_w
        H = np.zeros((self.n, self.n))
        T = self.tf_index
        b = np.arange(n_fe) * NX
        # cost
        H[b + A, b + A] += 2.0 * self.w1 * h
        H[b + OM, b + OM] += 2.0 * self.w2 * h
        H[b + A, T] += 2.0 * self.w1 * k[:-1, A] / n_fe
        H[b + OM, T] += 2.0 * self.w2 * k[:-1, OM] / n_fe
        # dynamics: defect = ... - h f(z_i); multiplier enters with a minus sign
        lam = np.asarray(lam_eq[:5 * n_fe]).reshape(n_fe, 5)
        th, v, phi = k[:-1, TH], k[:-1, V], k[:-1, PHI]
        c, s, t = np.cos(th), np.sin(th), np.tan(phi)
        sec2 = 1.0 + t * t
        lx, ly, lt, lv, lp = lam.T
        # -lam * (-h * d2f) = lam * h * d2f
        H[b + TH, b + TH] += h * (lx * (-v * c) + ly * (-v * s))
        H[b + TH, b + V] += h * (lx * (-s) + ly * c)
        H[b + V, b + PHI] += h * lt * sec2 / lw
        H[b + PHI, b + PHI] += h * lt * 2.0 * v * sec2 * t / lw
        # t_f cross terms: d(defect)/dt_f = -f/N, so d2/dt_f dz = -(df/dz)/N
        H[b + TH, T] += (lx * (-v * s) + ly * (v * c)) / n_fe
        H[b + V, T] += (lx * c + ly * s + lt * t / lw) / n_fe
        H[b + PHI, T] += lt * v * sec2 / lw / n_fe
        H[b + A, T] += lv / n_fe
        H[b + OM, T] += lp / n_fe
        # tunnel rows
        mu = np.asarray(lam_in).reshape(n_fe + 1, 8)
        _, _, off, cc, ss = self._disc_points(k)
        co = self.tunnel_coef
        d2 = -off[None, :] * (co[..., 0] * cc[:, None] + co[..., 1] * ss[:, None])
        bb = np.arange(n_fe + 1) * NX
        H[bb + TH, bb + TH] -= (mu * d2).sum(axis=1)
        # symmetrize the upper-triangle entries written above
        upper = np.triu(H, 1)
        return np.diag(np.diag(H)) + upper + upper.T


def _default_bounds(n_fe: int, limits):
    lb = np.full(NX * (n_fe + 1) + 1, -np.inf)
    ub = np.full_like(lb, np.inf)
    for comp, bound in ((V, limits.v_max), (PHI, limits.phi_max), (A, limits.a_max),
                        (OM, limits.omega_max)):
        lb[comp:NX * (n_fe + 1):NX] = -bound
        ub[comp:NX * (n_fe + 1):NX] = bound
    lb[-1] = T_F_MIN
    return lb, ub


def warm_start(ref: ReferenceTrajectory, n_fe: int, limits) -> np.ndarray:
    """Reference resampled at the knot times, clamped to the variable bounds."""
    tf = max(ref.t_f_ref, T_F_MIN)
    tk = np.arange(n_fe + 1) * (ref.t_f_ref / n_fe)
    z = np.concatenate([ref.sample(tk).ravel(), [tf]])
    lb, ub = _default_bounds(n_fe, limits)
    return np.clip(z, lb, ub)


def retime(z, factor: float, n_fe: int, lb=None, ub=None) -> np.ndarray:
    """Replay the same path ``factor`` times slower.

    Speeds and rates scale by ``1/factor``, acceleration by ``1/factor**2``
    and the horizon by ``factor``; poses and steering angles are unchanged.
    """
    if factor <= 0.0:
        raise ValueError("retime factor must be positive")
    z = np.array(z, dtype=float)
    k = z[:NX * (n_fe + 1)].reshape(n_fe + 1, NX)
    k[:, V] /= factor
    k[:, A] /= factor * factor
    k[:, OM] /= factor
    z[-1] *= factor
    if lb is not None:
        z = np.clip(z, lb, ub)
    return z


def build_nlp(scenario: Scenario, tunnels: tuple[Tunnel, Tunnel], warm: ReferenceTrajectory,
              n_fe: int) -> ParkingNlp:
    front, rear = tunnels
    n_r = len(front) - 1
    if n_fe != n_r or len(rear) != len(front):
        raise DimensionMismatch(f"n_fe={n_fe} must equal the tunnels' n_r={n_r}")
    lb, ub = _default_bounds(n_fe, scenario.limits)
    return ParkingNlp(
        n_fe=n_fe, veh=scenario.vehicle, w1=scenario.weights.w1, w2=scenario.weights.w2,
        start=scenario.start.as_array(), goal=scenario.goal.as_array(), lb=lb, ub=ub,
        x0=warm_start(warm, n_fe, scenario.limits),
        tunnel_coef=_tunnel_coefficients(tunnels, n_fe), tunnels=tunnels,
        offsets=disc_offsets(scenario.vehicle))


# -- post-hoc audit -------------------------------------------------------------

@dataclass
class AuditReport:
    max_defect: float
    max_bound_violation: float
    max_boundary_violation: float
    max_tunnel_violation: float
    tunnel_violations: list
    min_obstacle_clearance: float
    collision: bool
    offending_pose: tuple | None
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_defect": self.max_defect,
            "max_bound_violation": self.max_bound_violation,
            "max_boundary_violation": self.max_boundary_violation,
            "max_tunnel_violation": self.max_tunnel_violation,
            "tunnel_violations": list(self.tunnel_violations),
            "min_obstacle_clearance": self.min_obstacle_clearance,
            "collision": self.collision,
            "offending_pose": list(self.offending_pose) if self.offending_pose else None,
            "pass": self.passed,
        }


AUDIT_DEFECT_TOL = 1e-6
AUDIT_BOUND_TOL = 1e-8
AUDIT_BOUNDARY_TOL = 1e-6
AUDIT_TUNNEL_TOL = 1e-6


def verify_solution(scenario: Scenario, z, problem: ParkingNlp | None = None,
                    samples_per_element: int = 10) -> AuditReport:
    """Residual audit plus a dense full-footprint collision sweep.

    Footprints are checked against the original obstacles and the workspace
    walls, never against the tunnels.
    """
    z = np.asarray(z, dtype=float)
    n_fe = (len(z) - 1) // NX - 1
    if problem is None:
        lb, ub = _default_bounds(n_fe, scenario.limits)
        tmp = ParkingNlp(n_fe, scenario.vehicle, scenario.weights.w1, scenario.weights.w2,
                         scenario.start.as_array(), scenario.goal.as_array(), lb, ub, z,
                         np.zeros((n_fe + 1, 8, 3)), (), disc_offsets(scenario.vehicle))
    else:
        tmp = problem
    eq = tmp.eq(z)
    max_defect = float(np.max(np.abs(eq[:5 * n_fe]), initial=0.0))
    max_boundary = float(np.max(np.abs(eq[5 * n_fe:])))
    bound_viol = np.maximum(tmp.lb - z, z - tmp.ub)
    max_bound = float(max(0.0, np.max(bound_viol)))

    tunnel_rows = []
    max_tunnel = 0.0
    if problem is not None and len(problem.tunnels):
        g = problem.ineq(z)
        max_tunnel = float(max(0.0, -g.min()))
        tunnel_rows = [int(r) for r in np.nonzero(g < -AUDIT_TUNNEL_TOL)[0]]

    k = tmp.knots(z)
    tf = z[-1]
    tk = np.linspace(0.0, tf, n_fe + 1)
    ts = np.linspace(0.0, tf, samples_per_element * n_fe + 1)
    xs = np.interp(ts, tk, k[:, X])
    ys = np.interp(ts, tk, k[:, Y])
    ths = np.interp(ts, tk, k[:, TH])
    polygons = list(scenario.obstacles) + wall_polygons(scenario.bounds)
    min_clear = math.inf
    collision = False
    offending = None
    for x, y, th in zip(xs, ys, ths):
        body = footprint_polygon(Pose(float(x), float(y), float(th)), scenario.vehicle).vertices
        for poly in polygons:
            d = kernels.polygon_distance(body, poly.vertices)
            if d < min_clear:
                min_clear = d
            if d <= 0.0 and not collision:
                collision = True
                offending = (float(x), float(y), float(th))
    passed = (max_defect <= AUDIT_DEFECT_TOL and max_bound <= AUDIT_BOUND_TOL
              and max_boundary <= AUDIT_BOUNDARY_TOL and not tunnel_rows
              and not collision and min_clear > 0.0)
    return AuditReport(max_defect, max_bound, max_boundary, max_tunnel, tunnel_rows,
                       float(min_clear), collision, offending, passed)
