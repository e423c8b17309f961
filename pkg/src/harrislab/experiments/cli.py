"""Command line entry point: ``harrislab <experiment> [options]``.

Exit codes: 0 pass, 1 verdict failed, 2 invalid input, 3 undecidable or
not enough data.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import (BudgetExceededError, EstimationImpossibleError, HarrisLabError,
                      InvalidArgumentError, UndecidableError)
from .config import PRESETS, load_spec
from .report import summarize, write_result
from .runners import run
from .types import KINDS

EXIT_PASS, EXIT_FAIL, EXIT_INVALID, EXIT_UNDECIDABLE = 0, 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("replicas must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    common.add_argument("--seed", type=_u64)
    common.add_argument("--replicas", type=_positive)
    common.add_argument("--out", default="results")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    ap = argparse.ArgumentParser(prog="harrislab",
                                 description="Monte Carlo checks for the two-type contact process")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run the {kind} experiment")
    rep = sub.add_parser("report", help="summarize the reports found in --out")
    rep.add_argument("--out", default="results")
    return ap


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise InvalidArgumentError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_PASS
    if args.command == "report":
        reports, path = summarize(args.out)
        if not reports:
            print(f"no reports under {args.out}", file=sys.stderr)
            return EXIT_UNDECIDABLE
        for r in reports:
            print(f"{r['name']:<20} {r['kind']:<15} {r['verdict']}")
        print(f"summary: {path}")
        verdicts = {r["verdict"] for r in reports}
        if "fail" in verdicts:
            return EXIT_FAIL
        return EXIT_UNDECIDABLE if "undecidable" in verdicts else EXIT_PASS
    try:
        over = _overrides(args.set)
        spec = load_spec(args.command, args.config, args.preset, seed=args.seed,
                         replicas=args.replicas, **over)
        result = run(spec)
    except InvalidArgumentError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UndecidableError, EstimationImpossibleError, BudgetExceededError) as exc:
        print(f"undecidable: {exc}", file=sys.stderr)
        return EXIT_UNDECIDABLE
    except HarrisLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    paths = write_result(result, args.out, args.format)
    print(f"{args.command}: {result.verdict}")
    for k in sorted(result.metrics):
        v = result.metrics[k]
        if isinstance(v, (int, float, str, bool)):
            print(f"  {k} = {v}")
    print(f"report: {paths['report']}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
