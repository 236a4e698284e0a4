"""Command-line front end: run scenarios, emit plot data, list checks."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .reporting import (
    CHECK_DESCRIPTIONS, CHECKS, ScenarioError, emit_plotdata, load_scenario, run_scenario,
    write_outputs,
)

log = logging.getLogger("contraction_lap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contraction-lap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the checks of a scenario file")
    run.add_argument("--config", required=True, type=Path, help="scenario JSON file")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed (u64)")
    run.add_argument("--threads", type=int, default=1, help="parallel checks (0 = auto)")

    emit = sub.add_parser("emit-plotdata", help="write the CSV of one scan stored in a report")
    emit.add_argument("--report", required=True, type=Path, help="report.json from a run")
    emit.add_argument("--scan", required=True, help="scan id, e.g. lap-scan")
    emit.add_argument("--out", type=Path, default=None, help="CSV path (default <scan>.csv)")

    sub.add_parser("list-checks", help="print the available checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list-checks":
        for name in CHECKS:
            print(f"{name:15s} {CHECK_DESCRIPTIONS[name]}")
        return 0
    if args.command == "emit-plotdata":
        report = json.loads(args.report.read_text())
        try:
            path = emit_plotdata(report, args.scan, args.out or Path(f"{args.scan}.csv"))
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return 2
        print(path)
        return 0
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_scenario(args.config)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    log.info("running %d checks on %s", len(cfg["checks"]), cfg["model"]["family"])
    report, tables = run_scenario(cfg, seed=args.seed, threads=args.threads)
    for path in write_outputs(report, tables, args.out):
        log.info("wrote %s", path)
    for check in report["checks"]:
        line = f"{check['verdict']:4s} {check['name']}"
        if check["message"]:
            line += f"  ({check['message']})"
        print(line)
    return report["summary"]["exit_status"]


if __name__ == "__main__":
    raise SystemExit(main())
