"""Minimum-time speed profiles along the coarse path and reference trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coarse_planner import CoarsePath
from .geometry import VehicleParams, disc_offsets
from .scenario import Limits

TABLE_DT = 1e-3


@dataclass(frozen=True)
class MinTimeProfile:
    """Rest-to-rest bang-bang (or bang-coast-bang) speed profile.

    Full acceleration, optional cruise at ``v_max``, full braking. It is the
    time-optimal control for a double integrator with ``|v| <= v_max`` and
    ``|a| <= a_max``.
    """

    length: float
    v_peak: float
    a_max: float
    t_acc: float
    t_cruise: float

    @property
    def duration(self) -> float:
        return 2.0 * self.t_acc + self.t_cruise

    def speed(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        t_dec = self.t_acc + self.t_cruise
        return np.where(t < self.t_acc, self.a_max * t,
                        np.where(t <= t_dec, self.v_peak,
                                 np.maximum(self.v_peak - self.a_max * (t - t_dec), 0.0)))

    def distance(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        t_dec = self.t_acc + self.t_cruise
        s_acc = 0.5 * self.a_max * self.t_acc ** 2
        td = t - t_dec
        s = np.where(t < self.t_acc, 0.5 * self.a_max * t ** 2,
                     np.where(t <= t_dec, s_acc + self.v_peak * (t - self.t_acc),
                              s_acc + self.v_peak * self.t_cruise
                              + self.v_peak * td - 0.5 * self.a_max * td ** 2))
        return np.minimum(s, self.length)


def min_time_profile(length: float, v_max: float, a_max: float) -> MinTimeProfile:
    if not length > 0.0:
        raise ValueError(f"segment length must be positive, got {length}")
    if length >= v_max ** 2 / a_max:
        t_acc = v_max / a_max
        return MinTimeProfile(length, v_max, a_max, t_acc, (length - v_max ** 2 / a_max) / v_max)
    t_acc = math.sqrt(length / a_max)
    return MinTimeProfile(length, a_max * t_acc, a_max, t_acc, 0.0)


@dataclass(frozen=True)
class PathSegment:
    start: int
    end: int
    direction: int
    length: float


def split_segments(path: CoarsePath) -> list[PathSegment]:
    """Partition the path at its cusps into single-direction segments."""
    pts = path.points
    if len(pts) < 2:
        return []
    bounds = [0] + path.cusps() + [len(pts) - 1]
    return [PathSegment(a, b, int(pts[a].direction), pts[b].arc_length - pts[a].arc_length)
            for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Dense time table of the full state; query with :meth:`sample`."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    a: np.ndarray
    omega: np.ndarray
    cusp_times: tuple = ()

    @property
    def t_f_ref(self) -> float:
        return float(self.t[-1])

    CHANNELS = ("x", "y", "theta", "v", "phi", "a", "omega")

    def sample(self, tq) -> np.ndarray:
        """Interpolated ``[x, y, theta, v, phi, a, omega]`` rows at ``tq``."""
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        if len(self.t) == 1:
            return np.tile([getattr(self, c)[0] for c in self.CHANNELS], (len(tq), 1))
        return np.column_stack([np.interp(tq, self.t, getattr(self, c)) for c in self.CHANNELS])


def attach_time(path: CoarsePath, limits: Limits, wheelbase: float,
                dt: float = TABLE_DT) -> ReferenceTrajectory:
    """Time-parameterize the coarse path segment by segment.

    Every segment is driven rest to rest with :func:`min_time_profile`; speed
    is signed by the driving direction, steering follows the arc curvature and
    ``a``/``omega`` are central differences clamped to the limits.
    """
    pts = path.points
    if not pts:
        raise ValueError("cannot time an empty path")
    segments = [s for s in split_segments(path) if s.length > 0.0]
    if not segments:
        p = pts[0].pose
        one = np.array([0.0])
        return ReferenceTrajectory(one, np.array([p.x]), np.array([p.y]), np.array([p.theta]),
                                   np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))

    profiles = [min_time_profile(s.length, limits.v_max, limits.a_max) for s in segments]
    t_starts = np.concatenate([[0.0], np.cumsum([p.duration for p in profiles])])
    t_f = float(t_starts[-1])
    n = max(2, int(math.ceil(t_f / dt)) + 1)
    t = np.linspace(0.0, t_f, n)
    seg_idx = np.clip(np.searchsorted(t_starts, t, side="right") - 1, 0, len(segments) - 1)

    arc_s = np.array([p.arc_length for p in pts])
    s_abs = np.empty(n)
    speed = np.empty(n)
    for k, (seg, prof) in enumerate(zip(segments, profiles)):
        m = seg_idx == k
        tl = t[m] - t_starts[k]
        s_abs[m] = arc_s[seg.start] + prof.distance(tl)
        speed[m] = seg.direction * prof.speed(tl)

    # locate the arc for each sample; clamp inside the owning segment so that
    # samples at a cusp use the arc that leads into it
    arc = np.searchsorted(arc_s, s_abs, side="right") - 1
    for k, seg in enumerate(segments):
        m = seg_idx == k
        arc[m] = np.clip(arc[m], seg.start, seg.end - 1)
    x0 = np.array([p.pose.x for p in pts])
    y0 = np.array([p.pose.y for p in pts])
    th0 = np.array([p.pose.theta for p in pts])
    dirs = np.array([int(p.direction) for p in pts], dtype=float)
    steer = np.array([p.steering for p in pts])

    ds = (s_abs - arc_s[arc]) * dirs[arc]
    kappa = np.tan(steer[arc]) / wheelbase
    th = th0[arc] + kappa * ds
    straight = np.abs(kappa) < 1e-12
    safe_k = np.where(straight, 1.0, kappa)
    x = np.where(straight, x0[arc] + ds * np.cos(th0[arc]),
                 x0[arc] + (np.sin(th) - np.sin(th0[arc])) / safe_k)
    y = np.where(straight, y0[arc] + ds * np.sin(th0[arc]),
                 y0[arc] - (np.cos(th) - np.cos(th0[arc])) / safe_k)
    phi = steer[arc]

    acc = np.clip(np.gradient(speed, t), -limits.a_max, limits.a_max)
    omega = np.clip(np.gradient(phi, t), -limits.omega_max, limits.omega_max)
    return ReferenceTrajectory(t, x, y, th, speed, phi, acc, omega,
                               cusp_times=tuple(float(c) for c in t_starts[1:-1]))


@dataclass(frozen=True)
class PointTrajectory:
    """Time table of one reference point, with the vehicle heading alongside."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray

    @property
    def t_f_ref(self) -> float:
        return float(self.t[-1])

    def sample(self, tq):
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        if len(self.t) == 1:
            k = len(tq)
            return np.full(k, self.x[0]), np.full(k, self.y[0]), np.full(k, self.heading[0])
        return (np.interp(tq, self.t, self.x), np.interp(tq, self.t, self.y),
                np.interp(tq, self.t, self.heading))


def front_rear_reference(traj: ReferenceTrajectory, veh: VehicleParams):
    """Trajectories of the front and rear disc centers."""
    off_f, off_r = disc_offsets(veh)
    c, s = np.cos(traj.theta), np.sin(traj.theta)
    return (PointTrajectory(traj.t, traj.x + off_f * c, traj.y + off_f * s, traj.theta),
            PointTrajectory(traj.t, traj.x + off_r * c, traj.y + off_r * s, traj.theta))
