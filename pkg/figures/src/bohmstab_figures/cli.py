"""figures render --kind <k> --in <csv...> --out <png|svg>"""
from __future__ import annotations

import argparse
import sys

from .contract import MissingColumnError, SchemaMismatchError
from .render import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figures")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure from CSV inputs")
    r.add_argument("--kind", choices=KINDS, required=True)
    r.add_argument("--in", dest="inputs", nargs="+", required=True,
                   metavar="CSV")
    r.add_argument("--out", required=True, help="output .png or .svg")
    r.add_argument("--dpi", type=int, default=120)
    r.add_argument("--title", default="")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, out=args.out,
                          dpi=args.dpi, title=args.title)
        print(render(spec))
        return 0
    except (SchemaMismatchError, MissingColumnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
