"""Parking trajectory planning with safe travel tunnels and a dense SQP solver."""
from ._backend import BACKEND
from .coarse_planner import CoarsePath, NoPathFound, SearchConfig, plan_coarse_path
from .geometry import ConvexPolygon, OrientedBox, Pose, VehicleParams, disc_radius
from .ocp import build_nlp, verify_solution
from .pipeline import PlanReport, StageError, emit_outputs, plan, render_svg
from .scenario import (
    DilatedMap,
    Scenario,
    ScenarioError,
    bundled_scenarios,
    load_bundled,
    load_scenario,
    save_scenario,
)
from .solver import HessianMode, SolveStatus, SqpConfig, solve, solve_qp
from .timing import attach_time, min_time_profile
from .tunnel import SeedBlocked, build_tunnels

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoarsePath", "NoPathFound", "SearchConfig", "plan_coarse_path",
    "ConvexPolygon", "OrientedBox", "Pose", "VehicleParams", "disc_radius",
    "build_nlp", "verify_solution", "PlanReport", "StageError", "emit_outputs", "plan",
    "render_svg", "DilatedMap", "Scenario", "ScenarioError", "bundled_scenarios",
    "load_bundled", "load_scenario", "save_scenario", "HessianMode", "SolveStatus",
    "SqpConfig", "solve", "solve_qp", "attach_time", "min_time_profile", "SeedBlocked",
    "build_tunnels",
]
