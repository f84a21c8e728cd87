"""Command-line entry point.

Subcommands: run, verify, phases, gen-problem.  Exit codes: 0 success,
2 invariant violation, 1 error (malformed JSON reports line and column).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .averaging import WeightScheme
from .bench import ExperimentConfig, parse_trace, run_experiment, verify_trace
from .diagnostics import (TheoryConstants, transition_points_uniform,
                          transition_points_weighted)
from .problems import problem_from_json, problem_to_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2


def _load_json(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(_load_json(args.config))
    manifest = run_experiment(config)
    failed = [r for r in manifest["runs"] if r["status"] != "ok"]
    for r in failed:
        print(f"run failed: {r['label']} seed {r['seed']}: {r['error']}", file=sys.stderr)
    print(f"wrote {len(manifest['runs']) - len(failed)} traces to {config.output_dir}")
    code = EXIT_ERROR if failed else EXIT_OK
    if args.verify:
        out_dir = Path(config.output_dir)
        n_violations = 0
        for entry in manifest["runs"]:
            if entry["status"] != "ok":
                continue
            rows = parse_trace(out_dir / entry["trace"])
            meta = _load_json(str(out_dir / entry["meta"]))
            violations = verify_trace(rows, meta)
            for v in violations:
                print(f"{entry['trace']}: {v}", file=sys.stderr)
            n_violations += len(violations)
        if n_violations:
            return EXIT_VIOLATION
        print("verification clean")
    return code


def _cmd_verify(args) -> int:
    rows = parse_trace(args.trace)
    meta = _load_json(args.meta)
    violations = verify_trace(rows, meta)
    for v in violations:
        print(v, file=sys.stderr)
    if violations:
        return EXIT_VIOLATION
    print(f"{args.trace}: all invariants hold over {len(rows)} iterations")
    return EXIT_OK


def _cmd_phases(args) -> int:
    doc = _load_json(args.constants)
    constants = TheoryConstants.from_json(doc)
    if "averaging" in doc:
        scheme = WeightScheme.from_json(doc["averaging"])
        report = transition_points_weighted(constants, scheme)
        print(f"U1 = {report.U1!r}")
        print(f"J = {report.J!r}")
        print(f"U2 = {report.U2!r}")
    else:
        report = transition_points_uniform(constants)
        print(f"T1 = {report.T1!r}")
        print(f"I = {report.I!r}")
        print(f"T2 = {report.T2!r}")
        print(f"T3 = {report.T3!r}")
    return EXIT_OK


def _cmd_gen_problem(args) -> int:
    problem = problem_from_json(_load_json(args.spec))
    doc = problem_to_json(problem)
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote problem to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snpe-bench",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--verify", action="store_true",
                       help="re-check invariants on every produced trace")
    p_run.set_defaults(fn=_cmd_run)

    p_verify = sub.add_parser("verify", help="check invariants on a trace")
    p_verify.add_argument("trace")
    p_verify.add_argument("meta")
    p_verify.set_defaults(fn=_cmd_verify)

    p_phases = sub.add_parser("phases", help="evaluate phase-transition points")
    p_phases.add_argument("constants")
    p_phases.set_defaults(fn=_cmd_phases)

    p_gen = sub.add_parser("gen-problem", help="materialize a problem spec")
    p_gen.add_argument("spec")
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(fn=_cmd_gen_problem)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
