"""Command-line entry point: subcommand + --config, with seed/out overrides."""

from __future__ import annotations

import argparse
import sys

from .errors import SpectrapixError
from .harness import ExperimentConfig, run

COMMANDS = ("train", "eval", "decode", "feedback", "joint", "sweep",
            "export-spectra")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectrapix",
        description="Broadband diffractive networks for spectrally-encoded "
                    "single-pixel machine vision")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        if args.out is not None:
            cfg.data["out_dir"] = args.out
        report = run(cfg, args.command)
    except SpectrapixError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    scalars = {k: v for k, v in report.items()
               if isinstance(v, (int, float, str, bool))}
    for key in sorted(scalars):
        print(f"{key}: {scalars[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
