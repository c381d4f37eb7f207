"""Command-line interface.

Subcommands
-----------
check <spec>
    print the condition report as JSON.
run <spec> [--seed N] [--force] [--out DIR]
    run a problem spec file and write the record files.
compare <record.csv> <spec>
    compare a record with the reference solution of a spec file.
sweep <spec> --param PATH --values V1,V2,... [--jobs N]
    run once per value of a dotted spec field.

Exit codes: 0 ok or converged, 1 iteration cap reached, 2 condition
failure, 3 spec error, 4 reference unavailable.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConditionError, ReferenceUnavailable, SpecError, StructureError
from .harness.reference import solve_reference
from .harness.runner import check_spec, compare, load_record, run_experiment, sweep
from .harness.spec import ProblemSpec

EXIT_OK = 0
EXIT_MAX_ITERS = 1
EXIT_CONDITION = 2
EXIT_SPEC = 3
EXIT_REFERENCE = 4


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_values(text: str) -> list:
    """Comma-separated list; each item is read as JSON when possible."""
    return [_parse_value(t.strip()) for t in text.split(",") if t.strip()]


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_check(args) -> int:
    report = check_spec(ProblemSpec.load(args.spec))
    _print(report.to_dict())
    return EXIT_OK if report.verdict else EXIT_CONDITION


def cmd_run(args) -> int:
    rec = run_experiment(ProblemSpec.load(args.spec), args.seed, args.force, args.out)
    _print({"stop_reason": rec.stop_reason, "iterations": rec.iterations,
            "condition_forced": rec.condition_forced, "config_hash": rec.config_hash,
            "files": {k: str(v) for k, v in rec.paths.items()}})
    return EXIT_OK if rec.stop_reason == "converged" else EXIT_MAX_ITERS


def cmd_compare(args) -> int:
    rec = load_record(args.record)
    ref = solve_reference(ProblemSpec.load(args.spec))
    _print(compare(rec, ref).to_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = ProblemSpec.load(args.spec)
    entries = sweep(spec, args.param, parse_values(args.values), args.seed, args.force,
                    args.out, args.jobs)
    _print([e.to_dict() for e in entries])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpd", description="Random block-coordinate "
                                "primal-dual solvers and experiment harness.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="print the step-size condition report")
    c.add_argument("spec")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="run a spec and write its record")
    r.add_argument("spec")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--force", action="store_true", help="run even if the condition fails")
    r.add_argument("--out", default="runs", help="output directory (default: runs)")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare", help="compare a record with the reference solution")
    m.add_argument("record")
    m.add_argument("spec")
    m.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="run once per value of a spec field")
    s.add_argument("spec")
    s.add_argument("--param", required=True, help="dotted path, e.g. activation.prob")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--force", action="store_true")
    s.add_argument("--out", default="runs")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConditionError as exc:
        print(f"condition failure: {exc}", file=sys.stderr)
        if exc.report is not None:
            _print(exc.report.to_dict())
        return EXIT_CONDITION
    except ReferenceUnavailable as exc:
        print(f"reference unavailable: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except (SpecError, StructureError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
