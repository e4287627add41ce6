"""Command-line entry point: `figures <kind> --csv ... --out ...`."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render publication figures from simulation CSV/JSON "
                    "artifacts (read-only; no physics is recomputed).")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument("--json", default=None,
                        help="JSON summary (required for rates figures)")
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, csv_path=args.csv,
                      json_path=args.json, out_path=args.out)
    try:
        info = render(spec)
    except (OSError, ValueError, KeyError) as exc:
        print(f"figures: {exc}", file=sys.stderr)
        return 2
    print(info["out"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
