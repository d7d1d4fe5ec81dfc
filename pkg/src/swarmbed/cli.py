"""Command line entry point: ``swarmbed run | metrics | plotdata``."""

from __future__ import annotations

import argparse
import sys

from .analysis import PLOT_KINDS, dump_summary, metrics, plotdata
from .errors import ConfigError, RuntimeViolation, TrajectoryParseError
from .runner import run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmbed", description="Deterministic tabletop swarm simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write trajectory, summary and config")
    r.add_argument("scenario", help="scenario file (YAML or JSON)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. swarm.gain_epsilon=0.1 (repeatable)")

    m = sub.add_parser("metrics", help="compute summary metrics of a trajectory")
    m.add_argument("trajectory")
    m.add_argument("--json", action="store_true", help="print the full summary as JSON")

    d = sub.add_parser("plotdata", help="export a CSV table for plotting")
    d.add_argument("trajectory")
    d.add_argument("--kind", required=True, choices=PLOT_KINDS)
    d.add_argument("--out", required=True, help="output CSV file")
    return p


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.6g}"


def _print_summary(summary: dict) -> None:
    agg = summary.get("aggregate", {})
    print(f"algorithm      {summary.get('algorithm')}")
    print(f"robots         {' '.join(summary.get('robots', []))}")
    print(f"steps          {summary['steps']} ({summary['duration_s']:.3f} s)")
    if not agg:
        return
    ot, oc = agg["odom_vs_truth_m"], agg["odom_vs_camera_m"]
    print(f"odom-truth     mean {_fmt(ot['mean'])} std {_fmt(ot['std'])} max {_fmt(ot['max'])} m")
    print(f"odom-camera    mean {_fmt(oc['mean'])} std {_fmt(oc['std'])} max {_fmt(oc['max'])} m")
    print(f"camera-truth   mean {_fmt(agg['camera_vs_truth_mean_m'])} m")
    print(f"max speed      {_fmt(agg['max_speed_mps'])} m/s")
    print(f"convergence    step {agg['convergence_step'] if agg['convergence_step'] is not None else '-'}")
    if "pairwise_distance_m" in agg:
        pw = agg["pairwise_distance_m"]
        print(f"pairwise       min {_fmt(pw['min_over_run'])} final max {_fmt(pw['final_max'])} m")
    if "formation" in agg:
        print(f"formation      mean |d - target| {_fmt(agg['formation']['mean_abs_distance_error_m'])} m")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            out = run(args.scenario, args.out, args.seed, args.overrides)
            status = "converged" if out.result.converged else "finished"
            print(f"{status} after {out.result.steps} steps; artifacts in {out.out_dir}")
        elif args.command == "metrics":
            summary = metrics(args.trajectory)
            if args.json:
                sys.stdout.write(dump_summary(summary))
            else:
                _print_summary(summary)
        else:
            plotdata(args.trajectory, args.kind, args.out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except TrajectoryParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeViolation as exc:
        print(f"runtime violation at {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
