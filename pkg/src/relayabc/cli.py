"""Command-line entry point: ``relayabc {run,analyze,graphs,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relayabc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write trace, CSV and report")
    run.add_argument("--config", required=True, help="scenario JSON file or preset name")
    run.add_argument("--out", required=True)

    analyze = sub.add_parser("analyze", help="rebuild transition matrices from a trace and check them")
    analyze.add_argument("--trace", required=True)
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--mode", choices=("trace", "distance"), default="trace")
    analyze.add_argument("--export-matrices", action="store_true")

    graphs = sub.add_parser("graphs", help="enumerate reduced graphs and check source components")
    graphs.add_argument("--h", type=int, required=True)
    graphs.add_argument("--b", type=int, required=True)
    graphs.add_argument("--cap", type=int, default=None)

    sweep = sub.add_parser("sweep", help="run a template over a parameter grid")
    sweep.add_argument("--template", required=True)
    sweep.add_argument("--grid", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if args.command == "run":
        return harness.cmd_run(args.config, args.out)
    if args.command == "analyze":
        return harness.cmd_analyze(args.trace, args.out, args.mode, args.export_matrices)
    if args.command == "graphs":
        return harness.cmd_graphs(args.h, args.b, args.cap)
    return harness.cmd_sweep(args.template, args.grid, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
