"""Command line entry point: figure id + results directory -> image file."""

from __future__ import annotations

import argparse
import sys

from .inputs import StaleInputError
from .recipes import RECIPES
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dickefigs",
        description="Render a figure from a simulation results tree. "
                    "Inputs are checksum-verified against each run's "
                    "manifest before anything is drawn.")
    parser.add_argument("figure_id", choices=sorted(RECIPES),
                        help="which figure to render")
    parser.add_argument("--results", required=True,
                        help="directory holding one subdirectory per run")
    parser.add_argument("--out", default=".",
                        help="directory the image is written into")
    parser.add_argument("--format", default="png", choices=("png", "svg"),
                        help="image format (default png)")
    args = parser.parse_args(argv)
    try:
        path = render(args.figure_id, args.results, args.out,
                      fmt=args.format)
    except StaleInputError as exc:
        print(f"stale inputs: {exc}", file=sys.stderr)
        return 4
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
