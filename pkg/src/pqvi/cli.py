"""Command line entry point: ``pqvi run <config> [--jobs k] [--out dir] [--seed n]`` and ``pqvi check``."""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import load_config
from .errors import ConfigError, PqviError

EXIT_OK, EXIT_FAIL, EXIT_PARSE = 0, 1, 2


def _error_record(exc: BaseException, stage: str) -> dict:
    rec = {"status": "error", "stage": stage, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("step", "s", "residual", "node", "iteration", "magnitude"):
        val = getattr(exc, attr, None)
        if val is not None:
            rec[attr] = val if isinstance(val, (int, float, str)) else str(val)
    return rec


def cmd_run(args) -> int:
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config)
        updates = {}
        if args.seed is not None:
            updates["run.seed"] = args.seed
        if args.out is not None:
            updates["output.dir"] = args.out
        if updates:
            cfg = cfg.replace(**{k.replace(".", "__"): v for k, v in updates.items()})
    except ConfigError as exc:
        print(f"pqvi: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(cfg["output.dir"])
    try:
        status, summary = run_experiment(cfg, out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"pqvi: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (PqviError, ArithmeticError, ValueError, RuntimeError, FloatingPointError) as exc:
        rec = _error_record(exc, cfg["run.kind"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(rec, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_FAIL
    failed = [k for k, v in summary["assertions"].items() if not v]
    print(f"{summary['run_kind']}: {summary['status']} ({summary['wall_time_s']:.2f} s) -> {out}")
    for k in failed:
        print(f"  failed assertion: {k}")
    return status


def cmd_check(args) -> int:
    from .acceptance import run_all

    results = run_all(only=args.only)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.number:2d}  {r.name:<{width}}  {r.detail}")
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqvi", description="Parabolic QVI numerical laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="path to an INI experiment file")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for independent sub-runs")
    r.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    r.add_argument("--seed", type=int, default=None, help="seed for randomised checks (overrides run.seed)")
    r.add_argument("-v", "--verbose", action="store_true", help="print tracebacks on failure")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the built-in acceptance suite")
    c.add_argument("--only", type=int, nargs="*", default=None, help="criterion numbers to run")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
