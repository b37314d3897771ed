"""End-to-end planning: search, timing, tunnels, NLP, solve, audit, outputs."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from .coarse_planner import CoarsePath, SearchConfig, plan_coarse_path
from .geometry import disc_centers
from .ocp import NX, AuditReport, ParkingNlp, build_nlp, retime, verify_solution
from .scenario import DilatedMap, Scenario
from .solver import HessianMode, SolveStatus, SqpConfig, solve
from .timing import ReferenceTrajectory, attach_time, front_rear_reference
from .tunnel import Tunnel, build_tunnels

STAGES = ("dilate", "coarse_planner", "timing", "tunnel", "ocp", "solver", "verify")

# The pipeline solves with the exact Lagrangian Hessian; the damped BFGS
# variant stays available through ``sqp=SqpConfig()``.
PIPELINE_SQP = SqpConfig(hessian=HessianMode.EXACT)

# The timed reference ignores the steering-rate limit, so its speed profile
# is too aggressive for the first linearization. Starting the solver from the
# same path driven twice as slowly keeps the first QP consistent.
WARM_RETIME = 2.0


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PlanReport:
    scenario: Scenario
    t: np.ndarray
    knots: np.ndarray  # (N + 1, 7)
    t_f: float
    cost: float
    status: SolveStatus
    iterations: int
    kkt_residual: float
    feasibility_residual: float
    audit: AuditReport
    t_f_ref: float
    timings_ms: dict
    total_ms: float
    tunnels: Optional[tuple] = None
    coarse_path: Optional[CoarsePath] = field(default=None, repr=False)
    reference: Optional[ReferenceTrajectory] = field(default=None, repr=False)
    problem: Optional[ParkingNlp] = field(default=None, repr=False)

    @property
    def success(self) -> bool:
        return self.status is SolveStatus.CONVERGED and self.audit.passed

    def channel(self, name: str) -> np.ndarray:
        return self.knots[:, ("x", "y", "theta", "v", "phi", "a", "omega").index(name)]

    def trajectory_doc(self, timings: bool = True) -> dict:
        doc = {"scenario": self.scenario.name, "t": self.t.tolist()}
        for name in ("x", "y", "theta", "v", "phi", "a", "omega"):
            doc[name] = self.channel(name).tolist()
        doc.update(t_f=self.t_f, t_f_ref=self.t_f_ref, cost=self.cost, status=self.status.value,
                   iterations=self.iterations, kkt_residual=self.kkt_residual,
                   feasibility_residual=self.feasibility_residual, audit=self.audit.to_dict())
        if timings:
            doc["timings_ms"] = dict(self.timings_ms, total=self.total_ms)
        return doc

    def tunnels_doc(self) -> dict:
        return {"scenario": self.scenario.name,
                "tunnels": [t.to_dict() for t in self.tunnels] if self.tunnels else []}


def _check_endpoints(scenario: Scenario, tunnels: tuple[Tunnel, Tunnel]) -> None:
    """Start and goal disc centers must lie in the first and last boxes."""
    for label, state, k in (("start", scenario.start, 0), ("goal", scenario.goal, -1)):
        pf, pr = disc_centers(state.pose, scenario.vehicle)
        for tun, p in zip(tunnels, (pf, pr)):
            if not tun.boxes[k].contains(p, tol=1e-9):
                raise ValueError(f"{label} {tun.which.value} disc center {tuple(p)} lies outside "
                                 f"its {tun.which.value} box; the NLP would be infeasible")


def plan(scenario: Scenario, overrides: Optional[dict] = None, *,
         search: SearchConfig = SearchConfig(), sqp: SqpConfig = PIPELINE_SQP,
         log: Optional[TextIO] = None, keep_tunnels: bool = True,
         warm_retime: float = WARM_RETIME) -> PlanReport:
    """Run every stage on ``scenario``; ``overrides`` may set n_r, n_fe, ds, l_limit.

    The solver starts from the reference slowed down by ``warm_retime``
    (1.0 starts from the reference timing itself).

    Stage failures raise :class:`StageError`. A solver that stops without
    converging still yields a report carrying its last iterate.
    """
    timings: dict[str, float] = {}
    wall0 = time.perf_counter()
    stage = "dilate"

    def lap(name, t0):
        timings[name] = (time.perf_counter() - t0) * 1e3

    try:
        if overrides:
            scenario = scenario.with_planner(**overrides)
        settings = scenario.planner
        t0 = time.perf_counter()
        dmap = DilatedMap(scenario)
        lap(stage, t0)

        stage = "coarse_planner"
        t0 = time.perf_counter()
        path = plan_coarse_path(dmap, scenario.start.pose, scenario.goal.pose, search)
        lap(stage, t0)

        stage = "timing"
        t0 = time.perf_counter()
        ref = attach_time(path, scenario.limits, scenario.vehicle.l_w)
        traj_f, traj_r = front_rear_reference(ref, scenario.vehicle)
        lap(stage, t0)

        stage = "tunnel"
        t0 = time.perf_counter()
        tunnels = build_tunnels(dmap, traj_f, traj_r, settings.n_r, settings.ds, settings.l_limit,
                                goal=scenario.goal.pose)
        _check_endpoints(scenario, tunnels)
        lap(stage, t0)

        stage = "ocp"
        t0 = time.perf_counter()
        problem = build_nlp(scenario, tunnels, ref, settings.n_fe)
        lap(stage, t0)

        stage = "solver"
        t0 = time.perf_counter()
        x0 = retime(problem.x0, warm_retime, settings.n_fe, problem.lb, problem.ub)
        result = solve(problem, sqp, x0=x0, log=log)
        lap(stage, t0)

        stage = "verify"
        t0 = time.perf_counter()
        audit = verify_solution(scenario, result.z_opt, problem)
        lap(stage, t0)
    except Exception as exc:  # attribute every failure to its stage
        raise StageError(stage, exc) from exc

    total = (time.perf_counter() - wall0) * 1e3
    z = result.z_opt
    knots = z[:-1].reshape(settings.n_fe + 1, NX)
    t_f = float(z[-1])
    return PlanReport(
        scenario=scenario, t=np.arange(settings.n_fe + 1) * (t_f / settings.n_fe), knots=knots,
        t_f=t_f, cost=result.cost, status=result.status, iterations=result.iterations,
        kkt_residual=result.kkt_residual, feasibility_residual=result.feasibility_residual,
        audit=audit, t_f_ref=ref.t_f_ref, timings_ms=timings, total_ms=total,
        tunnels=tunnels if keep_tunnels else None, coarse_path=path, reference=ref,
        problem=problem)


# -- outputs --------------------------------------------------------------------

FOOTPRINT_EVERY = 5


def footprint_indices(n_knots: int, every: int = FOOTPRINT_EVERY) -> list[int]:
    """Every ``every``-th knot plus both endpoints."""
    idx = set(range(0, n_knots, every))
    idx.update((0, n_knots - 1))
    return sorted(idx)


def render_svg(report: PlanReport, tunnels: bool = True, px_per_m: float = 20.0) -> str:
    from .geometry import Pose, footprint_polygon

    sc = report.scenario
    xmin, ymin, xmax, ymax = sc.bounds
    w, h = (xmax - xmin) * px_per_m, (ymax - ymin) * px_per_m

    def pt(x, y):
        return f"{(x - xmin) * px_per_m:.3f},{(ymax - y) * px_per_m:.3f}"

    def poly(verts, style, cls):
        pts = " ".join(pt(x, y) for x, y in verts)
        return f'<polygon class="{cls}" points="{pts}" {style}/>'

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.3f} {h:.3f}">',
           f'<rect x="0" y="0" width="{w:.3f}" height="{h:.3f}" fill="white" stroke="black"/>']
    if tunnels and report.tunnels:
        colors = {"front": "blue", "rear": "green"}
        for tun in report.tunnels:
            color = colors[tun.which.value]
            out.append(f'<g class="tunnel-{tun.which.value}">')
            for box in tun.boxes:
                out.append(poly(box.vertices, f'fill="{color}" fill-opacity="0.08" stroke="{color}" '
                                              'stroke-opacity="0.3" stroke-width="0.5"', "box"))
            out.append("</g>")
    out.append('<g class="obstacles">')
    for obs in sc.obstacles:
        out.append(poly(obs.vertices, 'fill="gray" stroke="black" stroke-width="0.5"', "obstacle"))
    out.append("</g>")
    out.append('<g class="footprints">')
    xs, ys, ths = report.channel("x"), report.channel("y"), report.channel("theta")
    for k in footprint_indices(len(xs)):
        body = footprint_polygon(Pose(xs[k], ys[k], ths[k]), sc.vehicle).vertices
        out.append(poly(body, 'fill="none" stroke="red" stroke-width="0.8"', "footprint"))
    out.append("</g>")
    path_pts = " ".join(pt(x, y) for x, y in zip(xs, ys))
    out.append(f'<polyline class="path" points="{path_pts}" fill="none" stroke="black" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(report: PlanReport, out_dir, svg: bool = False, tunnels: bool = False) -> dict:
    """Write trajectory JSON (always), tunnel JSON and SVG on request; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.scenario.name or "plan"
    paths = {"trajectory": out / f"{stem}_trajectory.json"}
    paths["trajectory"].write_text(json.dumps(report.trajectory_doc(), indent=1), encoding="utf-8")
    if tunnels:
        paths["tunnels"] = out / f"{stem}_tunnels.json"
        paths["tunnels"].write_text(json.dumps(report.tunnels_doc(), indent=1), encoding="utf-8")
    if svg:
        paths["svg"] = out / f"{stem}.svg"
        paths["svg"].write_text(render_svg(report, tunnels=tunnels), encoding="utf-8")
    return paths
