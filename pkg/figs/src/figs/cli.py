"""Command-line entry point: figs <figure-spec> [...]"""

from __future__ import annotations

import argparse
import sys

from .render import render
from .runio import RunDataError
from .spec import FigureSpecError, parse_figure_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figs")
    parser.add_argument("spec", nargs="+", help="figure spec file(s)")
    args = parser.parse_args(argv)
    try:
        for path in args.spec:
            out = render(parse_figure_spec(path))
            print(f"wrote {out}")
        return 0
    except (FigureSpecError, RunDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
