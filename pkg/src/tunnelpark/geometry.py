"""Planar geometry: vehicle footprint, two-disc cover, convex polygons and
half-plane algebra.

All lengths are meters and angles radians. Polygons are stored as ``(n, 2)``
float arrays in counter-clockwise order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._backend import kernels

COINCIDENT_TOL = 1e-12
GEOM_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


class Vec2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Pose:
    """Rear-axle midpoint ``(x, y)`` and heading ``theta`` (never wrapped)."""

    x: float
    y: float
    theta: float

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)


@dataclass(frozen=True)
class VehicleParams:
    """Rectangular body measured from the rear axle.

    ``l_f`` front overhang, ``l_w`` wheelbase, ``l_r`` rear overhang and
    ``l_b`` body width.
    """

    l_f: float = 0.96
    l_w: float = 2.80
    l_r: float = 0.929
    l_b: float = 1.942

    def __post_init__(self):
        for name in ("l_f", "l_w", "l_r", "l_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise GeometryError(f"vehicle {name} must be positive, got {value}")

    @property
    def length(self) -> float:
        return self.l_r + self.l_w + self.l_f


def _signed_area(pts: np.ndarray) -> float:
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices.

    Use :meth:`from_points` to accept either orientation.
    """

    vertices: np.ndarray

    def __post_init__(self):
        pts = np.array(self.vertices, dtype=float).reshape(-1, 2)
        if len(pts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("polygon vertices must be finite")
        if _signed_area(pts) <= 0.0:
            raise GeometryError("polygon vertices must be counter-clockwise")
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= GEOM_TOL:
                raise GeometryError(f"polygon is not strictly convex at vertex {(i + 1) % n}")
        pts.setflags(write=False)
        object.__setattr__(self, "vertices", pts)

    @classmethod
    def from_points(cls, points) -> "ConvexPolygon":
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if len(pts) >= 3 and _signed_area(pts) < 0.0:
            pts = pts[::-1].copy()
        return cls(pts)

    def __eq__(self, other):
        if not isinstance(other, ConvexPolygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and bool(
            np.all(self.vertices == other.vertices))

    def __hash__(self):
        return hash(self.vertices.tobytes())

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Rectangle (possibly degenerate) in a frame rotated by ``axis_angle``.

    Vertices are counter-clockwise starting at the back-right corner of the
    frame. ``extents`` holds the distances from the frame origin along the four
    directions ``axis_angle + k * pi / 2``, ``k = 0..3``.
    """

    origin: Vec2
    axis_angle: float
    extents: tuple
    vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extents)
        if len(ext) != 4 or min(ext) < 0.0:
            raise GeometryError("box extents must be four non-negative lengths")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "origin", Vec2(float(self.origin[0]), float(self.origin[1])))
        front, left, back, right = ext
        c, s = math.cos(self.axis_angle), math.sin(self.axis_angle)
        local = np.array([[-back, -right], [front, -right], [front, left], [-back, left]])
        pts = np.empty((4, 2))
        pts[:, 0] = self.origin.x + c * local[:, 0] - s * local[:, 1]
        pts[:, 1] = self.origin.y + s * local[:, 0] + c * local[:, 1]
        pts.setflags(write=False)
        object.__setattr__(self, "vertices", pts)

    @property
    def center(self) -> Vec2:
        m = self.vertices.mean(axis=0)
        return Vec2(float(m[0]), float(m[1]))

    @property
    def length(self) -> float:
        return self.extents[0] + self.extents[2]

    @property
    def width(self) -> float:
        return self.extents[1] + self.extents[3]

    @property
    def is_degenerate(self) -> bool:
        return min(self.length, self.width) < GEOM_TOL

    def contains(self, p, tol: float = 0.0) -> bool:
        """Closed membership test in the box frame."""
        c, s = math.cos(self.axis_angle), math.sin(self.axis_angle)
        dx, dy = p[0] - self.origin.x, p[1] - self.origin.y
        u = c * dx + s * dy
        w = -s * dx + c * dy
        front, left, back, right = self.extents
        return -back - tol <= u <= front + tol and -right - tol <= w <= left + tol


class Sense(enum.Enum):
    GREATER = ">="
    LESS = "<="


@dataclass(frozen=True)
class HalfPlane:
    """``a*x + b*y + c >= 0`` (GREATER) or ``<= 0`` (LESS)."""

    a: float
    b: float
    c: float
    sense: Sense

    def __post_init__(self):
        if self.a == 0.0 and self.b == 0.0:
            raise GeometryError("half-plane normal must be non-zero")

    def value(self, x, y):
        return self.a * x + self.b * y + self.c

    def signed_margin(self, x, y):
        """Non-negative inside, scaled so that a GREATER form is returned."""
        v = self.value(x, y)
        return v if self.sense is Sense.GREATER else -v

    def holds(self, x, y) -> bool:
        return self.signed_margin(x, y) >= 0.0


# -- vehicle geometry -------------------------------------------------------

def footprint_polygon(pose: Pose, veh: VehicleParams) -> ConvexPolygon:
    """Body rectangle of the vehicle at ``pose``."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    hw = 0.5 * veh.l_b
    local = ((-veh.l_r, -hw), (veh.l_w + veh.l_f, -hw), (veh.l_w + veh.l_f, hw), (-veh.l_r, hw))
    return ConvexPolygon(np.array([(pose.x + c * u - s * w, pose.y + s * u + c * w) for u, w in local]))


def disc_offsets(veh: VehicleParams) -> tuple[float, float]:
    """Longitudinal offsets of the front and rear disc centers from the rear axle."""
    front = 0.25 * (3.0 * veh.l_w + 3.0 * veh.l_f - veh.l_r)
    rear = 0.25 * (veh.l_w + veh.l_f - 3.0 * veh.l_r)
    return front, rear


def disc_centers(pose: Pose, veh: VehicleParams) -> tuple[Vec2, Vec2]:
    """Centers of the front and rear covering discs (the body quartile points)."""
    off_f, off_r = disc_offsets(veh)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return (Vec2(pose.x + off_f * c, pose.y + off_f * s),
            Vec2(pose.x + off_r * c, pose.y + off_r * s))


def disc_radius(veh: VehicleParams) -> float:
    """Radius of two equal discs that together cover the body rectangle."""
    return 0.5 * math.sqrt((0.5 * veh.length) ** 2 + veh.l_b ** 2)


# -- polygon queries --------------------------------------------------------

def _verts(poly) -> np.ndarray:
    if isinstance(poly, (ConvexPolygon, OrientedBox)):
        return poly.vertices
    return np.asarray(poly, dtype=float)


def polygons_overlap(p, q) -> bool:
    """Closed-set overlap of two convex polygons (touching counts)."""
    return kernels.polygons_overlap(_verts(p), _verts(q))


def polygon_distance(p, q) -> float:
    """Minimum Euclidean distance between two convex polygons; 0 if they overlap."""
    return kernels.polygon_distance(_verts(p), _verts(q))


def point_polygon_distance(p, poly) -> float:
    return kernels.point_polygon_distance(float(p[0]), float(p[1]), _verts(poly))


def point_clear_of_dilated(p, obs, r: float) -> bool:
    """True iff a disc of radius ``r`` centered at ``p`` misses ``obs``."""
    if r <= 0.0:
        raise GeometryError("dilation radius must be positive")
    return point_polygon_distance(p, obs) >= r


class PolygonSet:
    """Packed, read-only collection of convex polygons for the kernels."""

    def __init__(self, polygons: Sequence):
        arrays = [np.asarray(_verts(p), dtype=float) for p in polygons]
        counts = [len(a) for a in arrays]
        self.verts = (np.ascontiguousarray(np.concatenate(arrays)) if arrays
                      else np.zeros((0, 2)))
        self.offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
        self.offsets[1:] = np.cumsum(counts)
        self.aabbs = np.array([[a[:, 0].min(), a[:, 1].min(), a[:, 0].max(), a[:, 1].max()]
                               for a in arrays]).reshape(-1, 4)
        for arr in (self.verts, self.offsets, self.aabbs):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.offsets) - 1

    def point_clear(self, x: float, y: float, r: float) -> bool:
        return kernels.point_clear(float(x), float(y), self.verts, self.offsets, self.aabbs, r)

    def clearance(self, x: float, y: float) -> float:
        return kernels.point_clearance(float(x), float(y), self.verts, self.offsets)

    def box_clear(self, box, r: float) -> bool:
        return kernels.box_clear(_verts(box), self.verts, self.offsets, self.aabbs, r)


# -- half-plane algebra -----------------------------------------------------

def line_coefficients(p1, p2) -> tuple[float, float, float]:
    """Coefficients of ``a*x + b*y + c = 0`` through ``p1`` and ``p2``."""
    x1, y1 = float(p1[0]), float(p1[1])
    x2, y2 = float(p2[0]), float(p2[1])
    if math.hypot(x2 - x1, y2 - y1) <= COINCIDENT_TOL:
        raise GeometryError("line through coincident points is undefined")
    return y2 - y1, x1 - x2, x2 * y1 - x1 * y2


def box_halfplanes(box: OrientedBox) -> list[HalfPlane]:
    """Four edge half-planes whose intersection is the closed box.

    The sense of each inequality is the side of the edge that holds the box
    center.
    """
    verts = box.vertices
    gx, gy = box.center
    planes = []
    for i in range(4):
        p1, p2 = verts[i], verts[(i + 1) % 4]
        try:
            a, b, c = line_coefficients(p1, p2)
        except GeometryError:
            raise GeometryError(f"box edge {i} has zero length") from None
        g = a * gx + b * gy + c
        if abs(g) <= COINCIDENT_TOL * math.hypot(a, b):
            raise GeometryError(f"box center lies on edge {i}; box is degenerate")
        planes.append(HalfPlane(a, b, c, Sense.GREATER if g > 0.0 else Sense.LESS))
    return planes


def inside_halfplanes(planes: Sequence[HalfPlane], x, y):
    """Vectorized membership: all planes hold (non-strictly) at ``(x, y)``."""
    ok = np.ones(np.shape(x), dtype=bool)
    for hp in planes:
        ok &= hp.signed_margin(x, y) >= 0.0
    return ok
