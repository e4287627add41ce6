"""Command-line entry point: `shearspec <scenario> --config <path>`."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import SCENARIOS, RunConfig, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shearspec",
        description="Frequency-space simulator for linearized compressible "
                    "flow around monotone shear; writes CSV time-series and "
                    "a JSON summary per scenario run.")
    parser.add_argument("scenario", choices=SCENARIOS,
                        help="which driver to run")
    parser.add_argument("--config", required=True,
                        help="flat key=value config file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides config out_dir)")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (overrides config seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"shearspec: bad config: {exc}", file=sys.stderr)
        return 2
    config = replace(config, scenario=args.scenario)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
