"""Command-line entry point: ``run``, ``sweep`` and ``verify``.

Exit codes: 0 on success, 1 when a verification check fails, 2 on a bad
config or bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import InvalidParameterError
from .harness import ExperimentConfig, load_sweep, run, summary_row, sweep, verify
from .verify import SUITES

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="userdp", description="User-level private SGD experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--repetitions", type=int)
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--unsafe-no-noise", action="store_true",
                       help="zero all privacy noise; the report is stamped non-private")

    p_sweep = sub.add_parser("sweep", help="run a grid of configs")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--unsafe-no-noise", action="store_true")

    p_verify = sub.add_parser("verify", help="run a battery of property checks")
    p_verify.add_argument("suite", choices=sorted(SUITES) + ["all"])
    p_verify.add_argument("--trials", type=int)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--json", action="store_true", help="print reports as JSON lines")
    return parser


def _warn_unsafe():
    print("WARNING: --unsafe-no-noise disables all privacy noise; results are NOT private.",
          file=sys.stderr)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config).with_overrides(
        seed=args.seed, out=args.out, repetitions=args.repetitions, workers=args.workers)
    if args.unsafe_no_noise:
        _warn_unsafe()
    report = run(cfg, unsafe_no_noise=args.unsafe_no_noise)
    print(json.dumps(summary_row(report)))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base, grid = load_sweep(args.config)
    if args.unsafe_no_noise:
        _warn_unsafe()
    for rep in sweep(base, grid, args.unsafe_no_noise, out=args.out):
        print(json.dumps({k: rep.config[k] for k in grid} | summary_row(rep)))
    return EXIT_OK


def _cmd_verify(args) -> int:
    reports = verify(args.suite, args.trials, args.seed)
    for rep in reports:
        print(rep.to_json() if args.json else rep.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
