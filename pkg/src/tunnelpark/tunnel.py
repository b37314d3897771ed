"""Representative nodes, greedy box growth and the front/rear tunnels."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .geometry import HalfPlane, OrientedBox, Vec2, box_halfplanes, disc_centers
from .scenario import DilatedMap
from .timing import PointTrajectory

FD_DEGENERATE = 1e-9


class SeedBlocked(RuntimeError):
    """A representative node violates the dilated map, so no box can grow."""

    def __init__(self, message, index=None, which=None):
        super().__init__(message)
        self.index = index
        self.which = which


class DegenerateTunnel(RuntimeError):
    """A grown box has (near) zero width and would make the NLP infeasible."""

    def __init__(self, message, index=None, which=None):
        super().__init__(message)
        self.index = index
        self.which = which


class Which(enum.Enum):
    FRONT = "front"
    REAR = "rear"


@dataclass(frozen=True)
class RepresentativeNode:
    position: Vec2
    orientation: float
    index: int
    t: float


def sample_nodes(traj: PointTrajectory, n_r: int, end_point=None) -> list[RepresentativeNode]:
    """``n_r + 1`` nodes evenly spaced in time, oriented by finite differences.

    Central differences inside, one-sided at both ends. Where the displacement
    vanishes (standstill, cusp) the vehicle heading is used instead.
    ``end_point`` replaces the position of the last node, e.g. with the exact
    goal disc center when the search stopped within tolerance of it.
    """
    if n_r < 1:
        raise ValueError("n_r must be at least 1")
    tk = np.arange(n_r + 1) * (traj.t_f_ref / n_r)
    xs, ys, heading = traj.sample(tk)
    nodes = []
    for k in range(n_r + 1):
        lo, hi = max(k - 1, 0), min(k + 1, n_r)
        dx, dy = xs[hi] - xs[lo], ys[hi] - ys[lo]
        if math.hypot(dx, dy) < FD_DEGENERATE:
            angle = float(heading[k])
        else:
            angle = math.atan2(dy, dx)
        nodes.append(RepresentativeNode(Vec2(float(xs[k]), float(ys[k])), angle, k, float(tk[k])))
    if end_point is not None:
        last = nodes[-1]
        nodes[-1] = RepresentativeNode(Vec2(float(end_point[0]), float(end_point[1])),
                                       last.orientation, last.index, last.t)
    return nodes


def _box_vertices(ox, oy, c, s, front, left, back, right):
    local = ((-back, -right), (front, -right), (front, left), (-back, left))
    return np.array([(ox + c * u - s * w, oy + s * u + c * w) for u, w in local])


def expand_box(dmap: DilatedMap, node: RepresentativeNode, ds: float, l_limit: float) -> OrientedBox:
    """Grow a rectangle around ``node`` one ``ds`` step at a time.

    The four directions are the node orientation plus multiples of 90
    degrees, visited round-robin in that order. A trial step is kept when the
    enlarged rectangle stays ``r_c`` away from every obstacle and wall. A
    direction retires on its first rejected trial, or right after an accepted
    step pushes its length beyond ``l_limit``; lengths can therefore reach
    ``l_limit + ds``.
    """
    if ds <= 0.0 or l_limit <= 0.0:
        raise ValueError("ds and l_limit must be positive")
    if not dmap.point_clear(node.position):
        raise SeedBlocked(f"node {node.index} at {tuple(node.position)} violates the dilated map",
                          index=node.index)
    ox, oy = node.position
    c, s = math.cos(node.orientation), math.sin(node.orientation)
    packed = dmap.packed
    steps = [0, 0, 0, 0]
    live = [0, 1, 2, 3]
    while live:
        for i in list(live):
            trial = [n * ds for n in steps]
            trial[i] = (steps[i] + 1) * ds
            verts = _box_vertices(ox, oy, c, s, *trial)
            if kernels.box_clear(verts, packed.verts, packed.offsets, packed.aabbs, dmap.r_c):
                steps[i] += 1
                if steps[i] * ds > l_limit:
                    live.remove(i)
            else:
                live.remove(i)
    return OrientedBox(node.position, node.orientation, tuple(n * ds for n in steps))


@dataclass(frozen=True)
class Tunnel:
    which: Which
    nodes: tuple
    boxes: tuple
    halfplanes: tuple  # per box, four HalfPlane

    def __len__(self):
        return len(self.boxes)

    def to_dict(self) -> dict:
        return {
            "which": self.which.value,
            "boxes": [
                {
                    "index": k,
                    "node": [node.position.x, node.position.y, node.orientation, node.t],
                    "vertices": box.vertices.tolist(),
                    "halfplanes": [[hp.a, hp.b, hp.c, hp.sense.name] for hp in planes],
                }
                for k, (node, box, planes) in enumerate(zip(self.nodes, self.boxes, self.halfplanes))
            ],
        }


def pave_tunnel(dmap: DilatedMap, traj: PointTrajectory, n_r: int, ds: float,
                l_limit: float, which: Which, end_point=None) -> Tunnel:
    nodes = sample_nodes(traj, n_r, end_point)
    boxes = []
    planes: list[list[HalfPlane]] = []
    for node in nodes:
        try:
            box = expand_box(dmap, node, ds, l_limit)
        except SeedBlocked as exc:
            raise SeedBlocked(f"{which.value} tunnel: {exc}", index=node.index, which=which) from None
        if box.is_degenerate:
            raise DegenerateTunnel(
                f"{which.value} tunnel box {node.index} is degenerate "
                f"(length {box.length:.3g} m, width {box.width:.3g} m)",
                index=node.index, which=which)
        boxes.append(box)
        planes.append(box_halfplanes(box))
    return Tunnel(which, tuple(nodes), tuple(boxes), tuple(tuple(p) for p in planes))


def build_tunnels(dmap: DilatedMap, traj_pf: PointTrajectory, traj_pr: PointTrajectory,
                  n_r: int, ds: float, l_limit: float, goal=None) -> tuple[Tunnel, Tunnel]:
    """Front and rear tunnels of ``n_r + 1`` boxes each.

    With ``goal`` (a pose) the last box of each tunnel is grown around the
    goal's own disc center instead of the end of the reference.
    """
    ends = (None, None)
    if goal is not None:
        ends = disc_centers(goal, dmap.scenario.vehicle)
    return (pave_tunnel(dmap, traj_pf, n_r, ds, l_limit, Which.FRONT, ends[0]),
            pave_tunnel(dmap, traj_pr, n_r, ds, l_limit, Which.REAR, ends[1]))
