"""Hybrid A* over (x, y, theta) with constant-steering arc primitives."""
from __future__ import annotations

import enum
import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ._backend import kernels
from .geometry import Pose, Vec2
from .scenario import DilatedMap


class NoPathFound(RuntimeError):
    """The search exhausted its open set or its expansion budget."""


class Direction(enum.IntEnum):
    FORWARD = 1
    REVERSE = -1


@dataclass(frozen=True)
class SearchConfig:
    xy_resolution: float = 0.3
    theta_bins: int = 72
    step_length: float = 0.6
    steering_set: Optional[Sequence[float]] = None
    reverse_cost_factor: float = 1.5
    gear_switch_penalty: float = 2.0
    max_expansions: int = 200_000
    goal_xy_tol: float = 0.3
    goal_theta_tol: float = math.radians(10.0)
    sample_spacing: float = 0.1
    # Extra clearance demanded of every searched disc center. It keeps the
    # poses between collision samples (and later the tunnel seeds) clear.
    clearance_margin: float = 0.2

    def __post_init__(self):
        for name in ("xy_resolution", "step_length", "max_expansions", "goal_xy_tol",
                     "goal_theta_tol", "sample_spacing", "theta_bins"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.reverse_cost_factor < 1.0:
            raise ValueError("reverse_cost_factor must be >= 1")
        if self.gear_switch_penalty < 0.0 or self.clearance_margin < 0.0:
            raise ValueError("penalties and margins must be non-negative")
        if self.steering_set is not None:
            steer = sorted(float(s) for s in self.steering_set)
            if not np.allclose(steer, sorted(-s for s in steer)):
                raise ValueError("steering_set must be symmetric about 0")

    def steering(self, phi_max: float) -> tuple[float, ...]:
        if self.steering_set is None:
            return (-phi_max, -phi_max / 2, 0.0, phi_max / 2, phi_max)
        steer = tuple(sorted(float(s) for s in self.steering_set))
        if max(abs(s) for s in steer) > phi_max + 1e-12:
            raise ValueError("steering_set exceeds phi_max")
        return steer


@dataclass(frozen=True)
class PathPoint:
    """A pose plus the primitive (direction, steering) that leaves it."""

    pose: Pose
    direction: Direction
    steering: float
    arc_length: float


@dataclass(frozen=True)
class CoarsePath:
    points: tuple

    @property
    def length(self) -> float:
        return self.points[-1].arc_length if self.points else 0.0

    def __len__(self):
        return len(self.points)

    def cusps(self) -> list[int]:
        """Indices where the driving direction flips."""
        return [i for i in range(1, len(self.points) - 1)
                if self.points[i].direction != self.points[i - 1].direction]


def arc_end(pose: Pose, direction: int, steering: float, length: float, wheelbase: float) -> Pose:
    """Exact end pose of a constant-steering arc of the given length."""
    kappa = math.tan(steering) / wheelbase
    s = direction * length
    if abs(kappa) < 1e-12:
        return Pose(pose.x + s * math.cos(pose.theta), pose.y + s * math.sin(pose.theta), pose.theta)
    th = pose.theta + kappa * s
    return Pose(pose.x + (math.sin(th) - math.sin(pose.theta)) / kappa,
                pose.y - (math.cos(th) - math.cos(pose.theta)) / kappa, th)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class HeuristicGrid:
    origin: Vec2
    resolution: float
    costs: np.ndarray  # (nx, ny), inf where blocked or unreachable

    def index(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin.x) / self.resolution)),
                int(math.floor((y - self.origin.y) / self.resolution)))

    def lookup(self, x: float, y: float) -> float:
        """Grid cost at the cell holding ``(x, y)``.

        A cell whose center is blocked can still hold a clear point; such
        cells borrow the cheapest neighbor plus one diagonal step.
        """
        i, j = self.index(x, y)
        nx, ny = self.costs.shape
        if not (0 <= i < nx and 0 <= j < ny):
            return math.inf
        c = self.costs[i, j]
        if math.isfinite(c):
            return float(c)
        block = self.costs[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
        return float(block.min()) + math.sqrt(2.0) * self.resolution


def holonomic_heuristic(dmap: DilatedMap, goal, xy_resolution: float) -> HeuristicGrid:
    """Obstacle-aware 8-connected shortest distance from every cell to ``goal``.

    Cells whose centers fail the dilated-map point test are blocked (infinite
    cost); the goal cell itself is always open.
    """
    xmin, ymin, xmax, ymax = dmap.scenario.bounds
    nx = max(1, int(math.ceil((xmax - xmin) / xy_resolution)))
    ny = max(1, int(math.ceil((ymax - ymin) / xy_resolution)))
    xs = xmin + (np.arange(nx) + 0.5) * xy_resolution
    ys = ymin + (np.arange(ny) + 0.5) * xy_resolution
    free = np.zeros((nx, ny), dtype=bool)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            free[i, j] = dmap.point_clear((x, y))
    grid = HeuristicGrid(Vec2(xmin, ymin), xy_resolution, np.full((nx, ny), math.inf))
    gi, gj = grid.index(goal[0], goal[1])
    if not (0 <= gi < nx and 0 <= gj < ny):
        raise ValueError("heuristic goal lies outside the workspace")
    free[gi, gj] = True

    ids = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        ii, jj = np.nonzero(free)
        ti, tj = ii + di, jj + dj
        inside = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
        ii, jj, ti, tj = ii[inside], jj[inside], ti[inside], tj[inside]
        ok = free[ti, tj]
        src, dst = ids[ii[ok], jj[ok]], ids[ti[ok], tj[ok]]
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(len(src), xy_resolution * math.hypot(di, dj)))
    graph = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nx * ny, nx * ny)).tocsr()
    dist = dijkstra(graph, directed=False, indices=int(ids[gi, gj]))
    dist = dist.reshape(nx, ny)
    dist[~free] = math.inf
    grid.costs = dist
    return grid


@dataclass
class _Node:
    x: float
    y: float
    theta: float
    g: float
    parent: int
    direction: int
    steering: float
    step: float = 0.0


def plan_coarse_path(dmap: DilatedMap, start: Pose, goal: Pose,
                     cfg: SearchConfig = SearchConfig()) -> CoarsePath:
    """Search a forward/reverse path from ``start`` to within tolerance of ``goal``."""
    if not dmap.state_clear(start):
        raise NoPathFound("start pose is in collision on the dilated map")
    if not dmap.state_clear(goal):
        raise NoPathFound("goal pose is in collision on the dilated map")

    veh = dmap.scenario.vehicle
    off_f, off_r = dmap.disc_offsets
    steering = cfg.steering(dmap.scenario.limits.phi_max)
    packed = dmap.packed
    radius = dmap.r_c + cfg.clearance_margin
    n_samples = max(1, int(math.ceil(cfg.step_length / cfg.sample_spacing - 1e-9)))
    dtheta = 2.0 * math.pi / cfg.theta_bins

    def at_goal(x, y, th):
        return (math.hypot(x - goal.x, y - goal.y) <= cfg.goal_xy_tol
                and abs(_wrap(th - goal.theta)) <= cfg.goal_theta_tol)

    def cell(x, y, th):
        return (int(math.floor(x / cfg.xy_resolution)), int(math.floor(y / cfg.xy_resolution)),
                int(math.floor((_wrap(th) + math.pi) / dtheta)) % cfg.theta_bins)

    nodes = [_Node(start.x, start.y, start.theta, 0.0, -1, 0, 0.0)]
    if at_goal(start.x, start.y, start.theta):
        return _reconstruct(nodes, 0)

    goal_r = (goal.x + off_r * math.cos(goal.theta), goal.y + off_r * math.sin(goal.theta))
    grid = holonomic_heuristic(dmap, goal_r, cfg.xy_resolution)

    def heuristic(x, y, th):
        rx, ry = x + off_r * math.cos(th), y + off_r * math.sin(th)
        return max(math.hypot(rx - goal_r[0], ry - goal_r[1]), grid.lookup(rx, ry))

    counter = itertools.count()
    open_heap = [(heuristic(start.x, start.y, start.theta), next(counter), 0)]
    best_g = {cell(start.x, start.y, start.theta): 0.0}
    closed = set()
    primitives = [(d, s) for d in (Direction.FORWARD, Direction.REVERSE) for s in steering]
    expansions = 0

    while open_heap:
        _, _, idx = heapq.heappop(open_heap)
        node = nodes[idx]
        key = cell(node.x, node.y, node.theta)
        if key in closed:
            continue
        closed.add(key)
        if at_goal(node.x, node.y, node.theta):
            return _reconstruct(nodes, idx)
        expansions += 1
        if expansions > cfg.max_expansions:
            raise NoPathFound(f"expansion budget of {cfg.max_expansions} exhausted")
        for direction, steer in primitives:
            kappa = math.tan(steer) / veh.l_w
            ok, x, y, th = kernels.arc_rollout(
                node.x, node.y, node.theta, int(direction) * cfg.step_length, kappa,
                n_samples, off_f, off_r, packed.verts, packed.offsets, packed.aabbs, radius)
            if not ok:
                continue
            ckey = cell(x, y, th)
            if ckey in closed:
                continue
            cost = cfg.step_length
            if direction == Direction.REVERSE:
                cost *= cfg.reverse_cost_factor
            if node.direction != 0 and node.direction != direction:
                cost += cfg.gear_switch_penalty
            g = node.g + cost
            if g >= best_g.get(ckey, math.inf):
                continue
            h = heuristic(x, y, th)
            if not math.isfinite(h):
                continue
            best_g[ckey] = g
            nodes.append(_Node(x, y, th, g, idx, int(direction), steer, cfg.step_length))
            heapq.heappush(open_heap, (g + h, next(counter), len(nodes) - 1))
    raise NoPathFound("open set exhausted; goal unreachable")


def _reconstruct(nodes: list, idx: int) -> CoarsePath:
    chain = []
    while idx >= 0:
        chain.append(nodes[idx])
        idx = nodes[idx].parent
    chain.reverse()
    points = []
    s = 0.0
    for k, node in enumerate(chain):
        if k + 1 < len(chain):
            nxt = chain[k + 1]
            direction, steer = Direction(nxt.direction), nxt.steering
        elif k > 0:
            direction, steer = Direction(node.direction), node.steering
        else:
            direction, steer = Direction.FORWARD, 0.0
        if k > 0:
            s += node.step
        points.append(PathPoint(Pose(node.x, node.y, node.theta), direction, steer, s))
    return CoarsePath(tuple(points))


def densify(path: CoarsePath, wheelbase: float, spacing: float = 0.1) -> list[Pose]:
    """Poses every ``spacing`` (or less) along each arc of the path."""
    poses = [path.points[0].pose] if path.points else []
    for a, b in zip(path.points[:-1], path.points[1:]):
        seg = b.arc_length - a.arc_length
        n = max(1, int(math.ceil(seg / spacing - 1e-9)))
        for i in range(1, n + 1):
            poses.append(arc_end(a.pose, int(a.direction), a.steering, seg * i / n, wheelbase))
    return poses
