"""synth: generate a synthetic grasp dataset"""
import argparse
import logging
from pathlib import Path

from commands.common import load_config, write_output
from models.enums import Primitive
from services.mesh_io import PRIMITIVE_PREFIX
from services.synthetic import generate_dataset
from storage.dataset_store import MANIFEST_NAME

logger = logging.getLogger(__name__)

DEFAULT_OBJECTS = [f"{PRIMITIVE_PREFIX}{primitive.value}" for primitive in Primitive]
DEFAULT_HANDS = ["t42"]


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("synth", parents=parents, help="render a ground-truthed grasp dataset")
    parser.add_argument("--objects", nargs="+", default=DEFAULT_OBJECTS,
                        help="object meshes or primitive:<name> (default: all primitives)")
    parser.add_argument("--hands", nargs="+", default=DEFAULT_HANDS, help="hand names or kinematics files")
    parser.add_argument("--dataset", required=True, help="output dataset directory")
    parser.add_argument("--scenes", type=int, help="scenes per object/hand combination (overrides the config)")
    parser.set_defaults(handler=cmd_synth)


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate the scenes and print the manifest path"""
    config = load_config(args)
    params = config.synthetic
    if args.scenes is not None:
        params = params.model_validate({**params.model_dump(), "n_per_combination": args.scenes})
    logger.info(f"Generating {params.n_per_combination} scenes per combination of {args.objects} x {args.hands}")

    entries = generate_dataset(args.objects, args.hands, args.dataset, params, config.seed, config.workers)
    write_output(f"manifest {Path(args.dataset) / MANIFEST_NAME}\nscenes {len(entries)}\n", args.out)
    return 0
