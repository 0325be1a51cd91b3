"""`render` command: histogram CSV in, figure image out."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="render",
        description="Render a figure from a density histogram CSV.")
    ap.add_argument("--kind", choices=KINDS, required=True)
    ap.add_argument("--in", dest="input_path", metavar="PATH", required=True)
    ap.add_argument("--out", dest="output_path", metavar="PATH",
                    required=True)
    ap.add_argument("--e-range", type=float, nargs=2, metavar=("A", "B"))
    ap.add_argument("--m-range", type=float, nargs=2, metavar=("A", "B"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        input_path=args.input_path, kind=args.kind,
        output_path=args.output_path,
        e_range=None if args.e_range is None else tuple(args.e_range),
        m_range=None if args.m_range is None else tuple(args.m_range))
    try:
        render(spec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
