"""Command-line entry point: ``coevo <command> [--config PATH] [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, preset
from .experiments import (
    MissingReference,
    run_couple_stats,
    run_graphon,
    run_meanfield,
    run_report,
    run_simulate,
)
from .meanfield import DegenerateDenominator

__all__ = ["main", "build_parser", "resolve_config"]

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = {
    "simulate": run_simulate,
    "meanfield": run_meanfield,
    "couple-stats": run_couple_stats,
    "graphon": run_graphon,
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--preset", choices=["desk", "paper"], help="defaults for unset fields")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--workers", type=_positive, default=1, help="process pool size")
    common.add_argument("--output", type=Path, help="override the configured output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="coevo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="particle runs for every (n, replicate)")
    sub.add_parser("meanfield", parents=[common], help="reference measure by fixed-point iteration")
    sub.add_parser("couple-stats", parents=[common], help="coupled comparison statistics")
    sub.add_parser("graphon", parents=[common], help="multiplex vs limiting multigraphon densities")
    sub.add_parser("report", parents=[common], help="concatenate summaries in the output directory")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config, args.preset)
    elif args.preset is not None:
        cfg = preset(args.preset)
    else:
        raise ConfigError("either --config or --preset is required")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.output is not None:
        cfg = replace(cfg, output_dir=str(args.output))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.output_dir)
        if args.command == "report":
            path = run_report(cfg, out)
            sys.stdout.write(path.read_text())
            return 0
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        files = COMMANDS[args.command](cfg, out, workers=args.workers)
        for f in files[:10]:
            print(f)
        if len(files) > 10:
            print(f"... {len(files) - 10} more")
        return 0
    except (ConfigError, MissingReference, FileNotFoundError, PermissionError) as exc:
        print(f"coevo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDenominator as exc:
        print(f"coevo: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
