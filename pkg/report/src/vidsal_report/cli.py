"""Command-line front end mirroring ReportSpec."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .render import ReportSpec, render_histograms, render_strips


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidsal-report", description="Render figures from vidsal pipeline outputs"
    )
    parser.add_argument("--version", action="version", version=f"vidsal-report {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("histograms", help="per-metric normalized histograms from a comparison run")
    p.add_argument("--compare-dir", required=True)
    p.add_argument("--metrics", help="comma-separated metric subset")
    p.add_argument("--bins", type=int, help="expected bin count (validated, never re-binned)")
    p.add_argument("--format", default="png")
    p.add_argument("--out", required=True)
    p.set_defaults(command="histograms")

    p = sub.add_parser("strips", help="per-clip frame/saliency/perturbed strips with mask timeline")
    p.add_argument("--explain-dir", action="append", required=True, help="repeatable")
    p.add_argument("--clips", help="comma-separated clip id subset")
    p.add_argument("--format", default="png")
    p.add_argument("--out", required=True)
    p.set_defaults(command="strips")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "histograms":
            spec = ReportSpec(
                compare_dir=args.compare_dir,
                metrics=args.metrics.split(",") if args.metrics else None,
                bins=args.bins,
                out_dir=args.out,
                image_format=args.format,
            )
            rendered = render_histograms(spec)
            print(f"rendered {len(rendered)} histogram figures")
        else:
            spec = ReportSpec(
                explain_dirs=args.explain_dir, out_dir=args.out, image_format=args.format
            )
            results = render_strips(spec, clip_ids=set(args.clips.split(",")) if args.clips else None)
            print(f"rendered {len(results)} clip strips")
        return 0
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
