"""Command-line entry point: run scenarios, estimate contact, verify.

Exit status contract (stable interface for sweep scripts):
0 completed, 2 piston contact, 3 mass depletion, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from typing import List, Optional

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .coords import EulerianField
from .diagnostics import CSV_COLUMNS, contact_time_lower_bound
from .run import (
    EXIT_FAILURE,
    RunResult,
    build_initial_state,
    run_simulation,
)

_INIT_SAMPLES_PER_CELL = 4


def _initial_field(config: ScenarioConfig, n_cells: int) -> EulerianField:
    b0 = config.initial.b0
    xs = np.linspace(0.0, b0, _INIT_SAMPLES_PER_CELL * n_cells + 1)
    rho = np.array([float(config.initial.rho0(x)) for x in xs])
    u = np.array([float(config.initial.u0(x)) for x in xs])
    return EulerianField(x=xs, rho=rho, u=u, b=b0)


def simulate_scenario(config: ScenarioConfig) -> RunResult:
    """Library-level equivalent of the ``run`` subcommand (no file output)."""
    field = _initial_field(config, config.numerics.n_cells)
    state, correction = build_initial_state(
        field, config.initial.b1, config.schedule, config.numerics
    )
    return run_simulation(
        config.params,
        config.numerics,
        config.schedule,
        state,
        snapshot_every=config.outputs.snapshot_every,
        initial_bdot_correction=correction,
    )


def render_series_csv(result: RunResult) -> str:
    """Deterministic CSV text of the recorded series (fixed column order)."""
    lines = [",".join(CSV_COLUMNS)]
    for record in result.series.records:
        lines.append(
            ",".join(repr(float(getattr(record, col))) for col in CSV_COLUMNS)
        )
    return "\n".join(lines) + "\n"


def render_summary_json(result: RunResult) -> str:
    return json.dumps(result.summary, indent=2, sort_keys=True) + "\n"


def _write_outputs(result: RunResult, config: ScenarioConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    series_path = os.path.join(out_dir, config.outputs.series)
    with open(series_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_series_csv(result))
    summary_path = os.path.join(out_dir, config.outputs.summary)
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_summary_json(result))
    for index, snap in enumerate(result.snapshots):
        path = os.path.join(out_dir, f"snapshot_{index:06d}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(snap.as_dict(), fh)
            fh.write("\n")


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    numerics = config.numerics
    if args.cells is not None:
        numerics = dataclasses.replace(numerics, n_cells=args.cells)
    if args.dt is not None:
        numerics = dataclasses.replace(numerics, dt_initial=args.dt)
    outputs = config.outputs
    if args.out is not None:
        outputs = dataclasses.replace(outputs, directory=args.out)
    return dataclasses.replace(config, numerics=numerics, outputs=outputs)


def cmd_run(args) -> int:
    try:
        config = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    result = simulate_scenario(config)
    if args.seed_free:
        again = simulate_scenario(config)
        if render_series_csv(result) != render_series_csv(again):
            print("determinism check failed: reruns differ", file=sys.stderr)
            return EXIT_FAILURE
    _write_outputs(result, config, config.outputs.directory)
    summary = result.summary
    print(f"status: {summary['status']}")
    if result.event_time is not None:
        print(f"event time: {result.event_time!r}")
    for key in (
        "energy_budget_residual",
        "b_consistency_max_drift",
        "contact_time_lower_bound",
        "g_bound_max_ratio",
        "g_bound_ok",
        "step_rejections",
    ):
        if summary.get(key) is not None:
            print(f"{key}: {summary[key]!r}")
    return result.exit_code


def cmd_estimate_contact(args) -> int:
    try:
        config = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if config.schedule.u_out is None:
        print("estimate-contact needs a nonempty outflow phase", file=sys.stderr)
        return EXIT_FAILURE
    coarse_cells = max(16, config.numerics.n_cells // 4)
    coarse = dataclasses.replace(
        config, numerics=dataclasses.replace(config.numerics, n_cells=coarse_cells)
    )
    result = simulate_scenario(coarse)
    out = [r for r in result.series.records if r.regime == "outflow"]
    if not out:
        print("run never reached the outflow phase", file=sys.stderr)
        return EXIT_FAILURE
    v_min = min(r.v_boundary for r in out)
    eta_star = result.series.eta_star
    t_star = result.series.t_star_actual
    horizon = max(config.schedule.t_end, (result.event_time or 0.0) + 1.0)
    bound = contact_time_lower_bound(
        eta_star, config.schedule.u_out, v_min, t_star=t_star, t_end=horizon
    )
    print(f"eta at outflow start: {eta_star!r}")
    print(f"boundary specific volume lower bound: {v_min!r}")
    if math.isfinite(bound):
        print(f"contact/depletion cannot happen before t = {bound!r}")
    else:
        print("no depletion within the horizon (bound unbounded)")
    if result.event_time is not None:
        print(f"coarse simulation event: {result.status} at t = {result.event_time!r}")
    else:
        print(f"coarse simulation completed without contact (t_end = "
              f"{config.schedule.t_end!r})")
    return result.exit_code if result.exit_code != 0 else 0


def cmd_verify(args) -> int:
    from . import acceptance

    suites = {
        "equilibrium": acceptance.suite_equilibrium,
        "manufactured": acceptance.suite_manufactured,
        "fixed_point": acceptance.suite_fixed_point,
        "budget": acceptance.suite_budget,
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    failed: List[str] = []
    for name in names:
        for check in suites[name]():
            status = "PASS" if check.passed else "FAIL"
            print(f"[{status}] {check.name}: {check.detail}")
            if not check.passed:
                failed.append(check.name)
    if failed:
        print(f"failed criteria: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pistonflow",
        description="1D viscous gas in a pipe closed by a spring-damper piston",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write its artifacts")
    run_p.add_argument("--config", required=True, help="scenario file (INI)")
    run_p.add_argument("--out", help="output directory override")
    run_p.add_argument("--cells", type=int, help="n_cells override")
    run_p.add_argument("--dt", type=float, help="dt_initial override")
    run_p.add_argument(
        "--seed-free",
        action="store_true",
        help="assert determinism by running twice and comparing outputs",
    )
    run_p.set_defaults(func=cmd_run)

    est_p = sub.add_parser(
        "estimate-contact",
        help="lower bound on the contact/depletion time vs a coarse run",
    )
    est_p.add_argument("--config", required=True)
    est_p.add_argument("--out", help="output directory override")
    est_p.add_argument("--cells", type=int, help="n_cells override")
    est_p.add_argument("--dt", type=float, help="dt_initial override")
    est_p.set_defaults(func=cmd_estimate_contact, seed_free=False)

    ver_p = sub.add_parser("verify", help="run an acceptance suite")
    ver_p.add_argument(
        "suite",
        choices=["equilibrium", "manufactured", "fixed_point", "budget", "all"],
    )
    ver_p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
