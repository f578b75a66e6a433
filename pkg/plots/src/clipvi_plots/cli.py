"""Command line entry point: render convergence figures from results CSVs."""

import argparse
import sys

from .figures import MEASURES, FigureSpec, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clipvi-plots",
        description="Render a multi-panel log-log convergence figure, "
        "one panel per results CSV and one curve per method.",
    )
    parser.add_argument("csvs", nargs="+", help="results CSV files, one panel each")
    parser.add_argument(
        "--measure",
        choices=MEASURES,
        default="last",
        help="plot the last-iterate or averaged-iterate distance (default: last)",
    )
    parser.add_argument("--out", required=True, help="output image path (e.g. fig.png)")
    parser.add_argument(
        "--title",
        action="append",
        default=None,
        help="panel title; repeat once per CSV (default: file stems)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            csv_paths=tuple(args.csvs),
            out=args.out,
            measure=args.measure,
            titles=tuple(args.title) if args.title is not None else None,
        )
        path = render(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"figure written to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
