"""Command-line front end: `relform-plot plot --kind ... --in ... --out ...`.

Exit codes: 0 success, 2 usage or schema error (the message names the
offending file and column).
"""

from __future__ import annotations

import argparse
import sys

from .reader import SchemaError, TraceData, load_input
from .render import render_error_bands, render_paths, render_trace

AXES_POLICY = (
    "Axes policy: limits are data-driven with a 5%% margin; the paths "
    "figure uses equal aspect; scales are linear unless --log-y is given. "
    "Images embed no timestamps, so identical inputs give identical bytes."
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relform-plot",
        description="Render figures from relform trace/summary files.",
        epilog=AXES_POLICY,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    plot = sub.add_parser("plot", help="render one figure", epilog=AXES_POLICY)
    plot.add_argument(
        "--kind", required=True, choices=("paths", "trace", "error-bands"),
        help="figure kind: agent paths, covariance trace curves, or error bands",
    )
    plot.add_argument(
        "--in", dest="inputs", action="append", required=True, metavar="FILE",
        help="input trace or summary file (repeatable)",
    )
    plot.add_argument("--out", required=True, help="output image path (.png/.svg/.pdf)")
    plot.add_argument("--log-y", action="store_true", help="log scale on the y axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        inputs = [load_input(p) for p in args.inputs]
        if args.kind == "paths":
            for item in inputs:
                if not isinstance(item, TraceData):
                    raise SchemaError(
                        f"{item.path}: paths figure needs trace files with xhat_* columns"
                    )
            render_paths(inputs, args.out)
        elif args.kind == "trace":
            render_trace(inputs, args.out, log_y=args.log_y)
        else:
            render_error_bands(inputs, args.out, log_y=args.log_y)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
