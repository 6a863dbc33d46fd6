"""Command-line entry point: run / compare / validate."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericalGuardError
from .harness import compare, parse_config, run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cavemit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run configuration")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--tol", type=float, default=None)

    p_val = sub.add_parser("validate", help="validate a run configuration")
    p_val.add_argument("config")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
            if args.seed is not None:
                cfg.master_seed = args.seed
            if args.workers is not None:
                cfg.workers = args.workers
            if args.out is not None:
                cfg.out = args.out
            out_dir = run(cfg)
            print(f"run complete: {out_dir}")
            return 0
        if args.command == "compare":
            report, _, ok = compare(args.dir_a, args.dir_b, args.tol)
            print(report)
            return 0 if ok else 1
        if args.command == "validate":
            parse_config(args.config)
            print("config ok")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalGuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
