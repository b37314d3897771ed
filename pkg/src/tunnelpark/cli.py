"""Command-line entry point: ``tunnelpark plan --scenario FILE``."""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .ocp import DimensionMismatch
from .pipeline import StageError, emit_outputs, plan
from .scenario import ScenarioError, load_scenario
from .solver import SolveStatus

EXIT_OK = 0
EXIT_PLANNER = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tunnelpark", description="Tunnel-constrained parking planner")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plan", help="plan a parking maneuver for one scenario file")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--nr", type=int, help="tunnel intervals (also sets --nfe unless given)")
    p.add_argument("--nfe", type=int, help="finite elements of the NLP")
    p.add_argument("--ds", type=float, help="box growth step [m]")
    p.add_argument("--llimit", type=float, help="per-direction box growth limit [m]")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    p.add_argument("--tunnels", action="store_true", help="also write the tunnels (JSON and SVG layer)")
    p.add_argument("--log-iterations", action="store_true", help="print one line per SQP iteration")
    return ap


def _overrides(args) -> dict:
    nfe = args.nfe if args.nfe is not None else args.nr
    return {"n_r": args.nr, "n_fe": nfe, "ds": args.ds, "l_limit": args.llimit}


def _err(msg: str) -> None:
    print(f"tunnelpark: {msg}", file=sys.stderr)


def run_plan(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        _err(f"cannot read scenario: {exc}")
        return EXIT_IO
    except ScenarioError as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_VALIDATION
    try:
        scenario = scenario.with_planner(**_overrides(args))
        if scenario.planner.n_fe != scenario.planner.n_r:
            raise DimensionMismatch(f"n_fe={scenario.planner.n_fe} must equal n_r={scenario.planner.n_r}")
    except (ScenarioError, DimensionMismatch, TypeError) as exc:
        _err(f"invalid settings: {exc}")
        return EXIT_VALIDATION

    try:
        report = plan(scenario, log=sys.stdout if args.log_iterations else None)
    except StageError as exc:
        _err(f"planning failed: {exc}")
        return EXIT_PLANNER

    try:
        paths = emit_outputs(report, args.out, svg=args.svg, tunnels=args.tunnels)
    except OSError as exc:
        _err(f"cannot write outputs: {exc}")
        return EXIT_IO

    audit = report.audit
    print(f"{scenario.name}: status={report.status.value} iterations={report.iterations} "
          f"t_f={report.t_f:.4f} s (reference {report.t_f_ref:.4f} s) cost={report.cost:.6f} "
          f"audit={'pass' if audit.passed else 'FAIL'} total={report.total_ms:.0f} ms")
    for key, path in paths.items():
        print(f"  {key}: {path}")
    if report.status is not SolveStatus.CONVERGED:
        _err(f"solver stopped with status {report.status.value}")
        return EXIT_PLANNER
    if not audit.passed:
        # a converged plan that fails the audit breaks the safety chain; show why
        _err("audit failed on a converged trajectory: " + json.dumps(audit.to_dict()))
        if audit.offending_pose is not None:
            x, y, th = audit.offending_pose
            _err(f"offending pose: x={x:.6f} y={y:.6f} theta={th:.6f}")
        return EXIT_PLANNER
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "plan":
        return run_plan(args)
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
