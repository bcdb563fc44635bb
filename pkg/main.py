import argparse
import logging
import sys
from typing import List, Optional

from commands import bench, configuration, estimate, hand, synth
from commands.common import run_guarded
from config import settings, setup_logging

logger = logging.getLogger(__name__)


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser; every subcommand shares the global flags"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration JSON file")
    common.add_argument("--seed", type=int, help="seed for every stochastic stage")
    common.add_argument("--workers", type=positive_int, help="worker threads (default: available CPUs)")
    common.add_argument("--emit-intermediates", metavar="DIR",
                        help="write the ROI cloud, object cloud and hypotheses to DIR")
    common.add_argument("--out", help="write the primary output to this file instead of stdout")
    common.add_argument("--log-level", help=f"logging level (default: {settings.log_level})")

    parser = argparse.ArgumentParser(prog="inhand-pose", description="In-hand object pose estimation from depth images")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register subcommands
    for module in (estimate, hand, synth, bench, configuration):
        module.register(subparsers, [common])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and run the chosen subcommand"""
    args = build_parser().parse_args(argv)
    if args.log_level:
        settings.log_level = args.log_level
    setup_logging()
    logger.info(f"Running command '{args.command}'")
    return run_guarded(args.handler, args)


if __name__ == "__main__":
    sys.exit(main())
