"""Command line interface: run / bench / validate.

Exit codes: 0 success, 1 online invariant violations, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .scenario import Scenario, ScenarioError, load_scenario, validate_scenario
from .runner import run
from .bench import run_bench
from ..scenarios import scenario_path


def _resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    builtin = scenario_path(arg)
    if builtin is not None:
        return builtin
    raise ScenarioError(f"scenario {arg!r} not found (no such file or builtin name)")


def _load(arg: str, args) -> Scenario:
    sc = load_scenario(_resolve_scenario(arg))
    sim = sc.sim
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    if args.steps is not None:
        sim = dataclasses.replace(sim, max_steps=args.steps)
    if args.dt is not None:
        sim = dataclasses.replace(sim, dt=args.dt)
    return dataclasses.replace(sc, sim=sim)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cotransport",
        description="Cooperative transportation simulator and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write telemetry")
    p_run.add_argument("--scenario", required=True,
                       help="scenario file path or builtin name (e.g. golden)")
    p_run.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory for telemetry and summary")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--parallel", action="store_true",
                       help="evaluate follower controllers in a thread pool")
    p_run.add_argument("--plots", action="store_true",
                       help="also write per-figure CSV bundles")

    p_bench = sub.add_parser("bench", help="run the timing benchmarks")
    p_bench.add_argument("--out", type=Path, default=None,
                         help="write bench.csv here in addition to stdout")
    p_bench.add_argument("--repetitions", type=int, default=10)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("--scenario", required=True)

    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            sc = load_scenario(_resolve_scenario(args.scenario))
            report = validate_scenario(sc)
            print(report.text())
            return 0 if report.ok else 2

        if args.command == "run":
            sc = _load(args.scenario, args)
            result = run(sc, out_dir=args.out, parallel=args.parallel,
                         plots=args.plots)
            print(result.summary())
            print(f"telemetry: {result.telemetry_path}")
            return 1 if result.violations else 0

        if args.command == "bench":
            report = run_bench(repetitions=args.repetitions)
            print(report.text())
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                report.write_csv(args.out / "bench.csv")
                print(f"bench table: {args.out / 'bench.csv'}")
            return 0
    except ScenarioError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
