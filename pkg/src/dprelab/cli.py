"""Command-line entry point. Exit status: 0 ok, 1 check failure, 2 refused config."""
from __future__ import annotations

import argparse
import json
import sys

from .environment import DomainError
from .experiments import EXPERIMENTS, RUNNERS, ConfigError, CostRefusal, load_config


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dprelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=_u64, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threads", type=_positive, help="worker threads (overrides config)")
        if name == "verify":
            p.add_argument("--fault", choices=["impure_environment"], help=argparse.SUPPRESS)
    return parser


def _summary(command: str, result: dict) -> dict:
    if command == "verify":
        return {"passed": result["passed"],
                "failed": [c["name"] for c in result["checks"] if not c["passed"]]}
    if command == "continuum-constant":
        return {"csv": result["csv"]}
    return {k: result[k] for k in ("csv", "bisection") if k in result}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
    try:
        cfg = load_config(args.config, args.command, overrides)
        if getattr(args, "fault", None):
            cfg.verify.fault = args.fault
        result = RUNNERS[args.command](cfg)
    except CostRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_summary(args.command, result), default=str))
    if args.command == "verify" and not result["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
