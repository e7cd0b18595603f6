"""``slag`` command line: ``run``, ``list`` and ``describe``.

Exit codes: 0 all checks pass, 1 some check fails, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .exceptions import SlagError
from .runner import RunOptions, SolverFailure, dump_report, run_scenario
from .scenarios import ConfigError, catalog, load, resolve_name

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("slag")


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("SLAG_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"SLAG_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("SLAG_THREADS must be positive")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slag", description="Special Lagrangian fibration toolkit.")
    ap.add_argument("--version", action="version", version=f"slag {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file or catalog entry")
    run.add_argument("scenario", help="JSON file, or catalog name / catalog/<name>.json")
    run.add_argument("--tol", type=float, help="residual tolerance (rescales all residual thresholds)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--threads", type=int, help="worker threads (default: $SLAG_THREADS or 1)")
    run.add_argument("--out", type=Path, help="directory for the JSON report and CSV dumps")
    run.add_argument("--t", type=float, help="family parameter override")
    run.add_argument("--m", type=int, help="mesh order override")
    run.add_argument("--no-chain", action="store_true", help="disable chained continuation in t")

    sub.add_parser("list", help="list catalog scenarios")
    desc = sub.add_parser("describe", help="describe a catalog scenario")
    desc.add_argument("name")
    return ap


def _cmd_list() -> int:
    for name, sc in catalog().items():
        print(f"{name:20s} {sc.summary.split(':')[0]}")
    return EXIT_OK


def _cmd_describe(name: str) -> int:
    sc = resolve_name(name)
    print(sc.name)
    print(f"  {sc.summary}")
    print(f"  plan: {', '.join(sc.plan)}")
    if sc.knobs:
        print("  knobs: " + ", ".join(f"{k}={v}" for k, v in sc.knobs.items() if k != "seeds"))
    return EXIT_OK


def _cmd_run(args) -> int:
    sc = load(args.scenario)
    if args.tol is not None and args.tol <= 0:
        raise ConfigError("--tol must be positive")
    if args.m is not None and not 1 <= args.m <= 64:
        raise ConfigError("--m must be in [1, 64]")
    opts = RunOptions(seed=args.seed, tol=args.tol, threads=_threads(args.threads),
                      out=args.out, t=args.t, m=args.m, chain=not args.no_chain)
    report = run_scenario(sc, opts)
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark}  {c['action']:11s} {c['name']:38s} {c['value']:.3e}  ({c['relation']} {c['threshold']})")
    if args.out is None:
        log.debug(dump_report(report))
    else:
        print(f"report: {args.out / (sc.name + '_report.json')}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "describe":
            return _cmd_describe(args.name)
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, SlagError) as exc:
        msg = str(exc)
        print(f"solver failure: {msg}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
