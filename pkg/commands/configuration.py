"""config: write the effective pipeline configuration"""
import argparse
import logging
from pathlib import Path

from commands.common import load_config
from exceptions import DatasetIOError

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("config", parents=parents,
                                   help="write the default (or --config plus overrides) pipeline configuration")
    parser.set_defaults(handler=cmd_config)


def cmd_config(args: argparse.Namespace) -> int:
    """Write the config as JSON to --out, or print it"""
    config = load_config(args)
    if args.out is None:
        print(config.model_dump_json(indent=2))
        return 0
    path = Path(args.out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        config.write(path)
    except OSError as e:
        raise DatasetIOError(path, str(e))
    logger.info(f"Configuration written to {path}")
    return 0
