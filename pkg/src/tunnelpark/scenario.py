"""Scenario data model, JSON ingestion and the dilated-map facade."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import (
    ConvexPolygon,
    GeometryError,
    OrientedBox,
    PolygonSet,
    Pose,
    VehicleParams,
    disc_offsets,
    disc_radius,
    footprint_polygon,
    polygons_overlap,
)

WALL_THICKNESS = 1.0


class ScenarioError(ValueError):
    """Scenario file is malformed or violates a data-model invariant."""


@dataclass(frozen=True)
class Limits:
    a_max: float = 4.0
    v_max: float = 3.0
    phi_max: float = 0.70
    omega_max: float = 0.5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0.0):
                raise ScenarioError(f"limit {name} must be positive, got {value}")
        if self.phi_max >= math.pi / 2:
            raise ScenarioError("phi_max must be below pi/2")


@dataclass(frozen=True)
class Weights:
    w1: float = 0.1
    w2: float = 0.01

    def __post_init__(self):
        if self.w1 < 0.0 or self.w2 < 0.0:
            raise ScenarioError("cost weights must be non-negative")


@dataclass(frozen=True)
class BoundaryState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    phi: float = 0.0
    a: float = 0.0
    omega: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.theta)

    def as_array(self) -> np.ndarray:
        """``[x, y, theta, v, phi, a, omega]``."""
        return np.array([self.x, self.y, self.theta, self.v, self.phi, self.a, self.omega])

    def check(self, limits: Limits, label: str) -> None:
        checks = (("v", self.v, limits.v_max), ("phi", self.phi, limits.phi_max),
                  ("a", self.a, limits.a_max), ("omega", self.omega, limits.omega_max))
        for name, value, bound in checks:
            if abs(value) > bound:
                raise ScenarioError(f"{label} {name}={value} exceeds limit {bound}")


@dataclass(frozen=True)
class PlannerSettings:
    """Tunnel and discretization settings (``n_r`` box intervals, ``n_fe`` elements)."""

    n_r: int = 60
    n_fe: int = 60
    ds: float = 0.1
    l_limit: float = 8.0

    def __post_init__(self):
        if self.n_r < 1 or self.n_fe < 1:
            raise ScenarioError("n_r and n_fe must be at least 1")
        if self.ds <= 0.0 or self.l_limit <= 0.0:
            raise ScenarioError("ds and l_limit must be positive")


@dataclass(frozen=True)
class Scenario:
    bounds: tuple
    obstacles: tuple
    vehicle: VehicleParams
    limits: Limits
    weights: Weights
    start: BoundaryState
    goal: BoundaryState
    planner: PlannerSettings = field(default_factory=PlannerSettings)
    name: str = ""

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(b) for b in self.bounds)
        if not (xmax > xmin and ymax > ymin):
            raise ScenarioError("bounds must satisfy xmin < xmax and ymin < ymax")
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for label, state in (("start", self.start), ("goal", self.goal)):
            state.check(self.limits, label)
            body = footprint_polygon(state.pose, self.vehicle).vertices
            if (body[:, 0].min() < xmin or body[:, 0].max() > xmax
                    or body[:, 1].min() < ymin or body[:, 1].max() > ymax):
                raise ScenarioError(f"{label} footprint leaves the workspace bounds")
            for k, obs in enumerate(self.obstacles):
                if polygons_overlap(body, obs):
                    raise ScenarioError(f"{label} footprint collides with obstacle {k}")

    def with_planner(self, **overrides) -> "Scenario":
        settings = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, planner=replace(self.planner, **settings))


# -- serialization ----------------------------------------------------------

def _state_from(doc, label) -> BoundaryState:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{label} must be an object")
    try:
        return BoundaryState(**{k: float(v) for k, v in doc.items()})
    except TypeError as exc:
        raise ScenarioError(f"{label}: {exc}") from None


def scenario_from_dict(doc: dict, name: str = "") -> Scenario:
    """Build a validated scenario; clockwise obstacles are reversed to CCW."""
    try:
        bounds = [float(b) for b in doc["bounds"]]
        if len(bounds) != 4:
            raise ScenarioError("bounds must be [xmin, ymin, xmax, ymax]")
        vehicle = VehicleParams(**{k: float(v) for k, v in doc.get("vehicle", {}).items()})
        limits = Limits(**{k: float(v) for k, v in doc.get("limits", {}).items()})
        weights = Weights(**{k: float(v) for k, v in doc.get("weights", {}).items()})
        planner_doc = dict(doc.get("planner", {}))
        for key in ("n_r", "n_fe"):
            if key in planner_doc:
                planner_doc[key] = int(planner_doc[key])
        planner = PlannerSettings(**planner_doc)
        start = _state_from(doc["start"], "start")
        goal = _state_from(doc["goal"], "goal")
        obstacles = []
        for k, pts in enumerate(doc.get("obstacles", [])):
            try:
                obstacles.append(ConvexPolygon.from_points(pts))
            except GeometryError as exc:
                raise ScenarioError(f"obstacle {k}: {exc}") from None
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    return Scenario(bounds=tuple(bounds), obstacles=tuple(obstacles), vehicle=vehicle,
                    limits=limits, weights=weights, start=start, goal=goal,
                    planner=planner, name=name or str(doc.get("name", "")))


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {
        "name": sc.name,
        "bounds": list(sc.bounds),
        "vehicle": asdict(sc.vehicle),
        "limits": asdict(sc.limits),
        "weights": asdict(sc.weights),
        "start": asdict(sc.start),
        "goal": asdict(sc.goal),
        "planner": asdict(sc.planner),
        "obstacles": [obs.vertices.tolist() for obs in sc.obstacles],
    }
    return doc


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return scenario_from_dict(doc, name=doc.get("name") or path.stem)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2), encoding="utf-8")


def bundled_scenarios() -> list[str]:
    root = resources.files("tunnelpark") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario_path(name: str) -> Path:
    path = Path(str(resources.files("tunnelpark") / "scenarios" / f"{name}.json"))
    if not path.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return path


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))


# -- dilated map --------------------------------------------------------------

def wall_polygons(bounds, thickness: float = WALL_THICKNESS) -> list[ConvexPolygon]:
    """Four thin rectangles hugging the outside of the workspace bounds."""
    xmin, ymin, xmax, ymax = bounds
    t = thickness
    rects = [
        (xmin - t, ymin - t, xmax + t, ymin),
        (xmin - t, ymax, xmax + t, ymax + t),
        (xmin - t, ymin, xmin, ymax),
        (xmax, ymin, xmax + t, ymax),
    ]
    return [ConvexPolygon(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))
            for x0, y0, x1, y1 in rects]


class DilatedMap:
    """Obstacles and walls inflated by the disc radius, queried implicitly.

    Every query is a distance test against the original polygons, so the
    inflated shapes (with their rounded corners) are never built.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.r_c = disc_radius(scenario.vehicle)
        self.walls = wall_polygons(scenario.bounds)
        self.polygons = list(scenario.obstacles) + self.walls
        self.packed = PolygonSet(self.polygons)
        self.obstacles_only = PolygonSet(scenario.obstacles)
        self.disc_offsets = disc_offsets(scenario.vehicle)

    def point_clear(self, p, margin: float = 0.0) -> bool:
        return self.packed.point_clear(p[0], p[1], self.r_c + margin)

    def clearance(self, p) -> float:
        """Distance from ``p`` to the nearest original obstacle or wall."""
        return self.packed.clearance(p[0], p[1])

    def box_clear(self, box: OrientedBox) -> bool:
        return self.packed.box_clear(box, self.r_c)

    def state_clear(self, pose: Pose, margin: float = 0.0) -> bool:
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        r = self.r_c + margin
        for off in self.disc_offsets:
            if not self.packed.point_clear(pose.x + off * c, pose.y + off * s, r):
                return False
        return True

    def in_bounds(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.scenario.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax


def default_scenario(**fields) -> Scenario:
    """Empty 20 m x 20 m lot with the default vehicle, limits and weights; fields override."""
    doc = dict(
        bounds=(0.0, 0.0, 20.0, 20.0),
        obstacles=(),
        vehicle=VehicleParams(),
        limits=Limits(),
        weights=Weights(),
        start=BoundaryState(5.0, 10.0, 0.0),
        goal=BoundaryState(12.0, 10.0, 0.0),
    )
    doc.update(fields)
    return Scenario(**doc)
