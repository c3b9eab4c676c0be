"""Command line for rendering figures from runner CSVs.

    figtool <kind> --in curve.csv[,curve2.csv] --out fig.svg [--log-x] [--log-y]
"""

from __future__ import annotations

import argparse
import sys

from .io import MissingColumnError
from .plots import KINDS, FigureSpec, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figtool", description="render figures from wigner-otoc CSVs")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", required=True, help="comma-separated CSV paths")
    parser.add_argument("--out", dest="output", required=True, help="output image path (.svg or .png)")
    parser.add_argument("--log-x", action="store_true")
    parser.add_argument("--log-y", action="store_true")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            inputs=[p for p in args.inputs.split(",") if p],
            output=args.output,
            log_x=args.log_x,
            log_y=args.log_y,
        )
        paths, fig, _ = render(spec)
    except MissingColumnError as exc:
        print(f"figtool error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"figtool error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print("wrote " + ", ".join(str(p) for p in paths))
    return 0


if __name__ == "__main__":
    sys.exit(main())
