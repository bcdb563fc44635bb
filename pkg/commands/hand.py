"""hand: standalone hand state estimation"""
import argparse
import json
import logging

from commands.common import SceneInputs, add_scene_arguments, load_config, write_output
from models.hand import HandModel
from models.scene import pose_to_row_major
from services.hand_model import load_hand_model
from services.pipeline import PoseEstimationPipeline
from services.pso import HandEstimate, estimate_hand

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("hand", parents=parents, help="estimate the wrist pose and finger joint angles")
    add_scene_arguments(parser, needs_object=False)
    parser.add_argument("--cloud", help="camera-frame PLY scene cloud (optional nx, ny, nz) used instead of --depth")
    parser.set_defaults(handler=cmd_hand)


def format_hand_state(estimate: HandEstimate, model: HandModel) -> str:
    """JSON with the row-major wrist pose and joint angles per finger name"""
    state = estimate.state
    document = {
        "hand": model.name,
        "wrist_pose": [float(f"{value:.9g}") for value in pose_to_row_major(state.wrist_pose)],
        "wrist_degenerate": estimate.wrist_degenerate,
        "finger_order": [model.fingers[i].name for i in estimate.finger_order],
        "fingers": {
            finger.name: [float(f"{angle:.9g}") for angle in config.angles]
            for finger, config in zip(model.fingers, state.finger_configs)
        }
    }
    return json.dumps(document, indent=2) + "\n"


def cmd_hand(args: argparse.Namespace) -> int:
    """Refine the wrist and fit every finger, then print the hand state"""
    config = load_config(args)
    inputs = SceneInputs.from_args(args, needs_object=False)
    logger.info(f"Estimating hand state of {inputs.hand}")

    model = load_hand_model(inputs.hand, seed=config.seed)
    pipeline = PoseEstimationPipeline(model, config)
    if inputs.cloud is not None:
        scene = inputs.cloud
    else:
        scene = pipeline.scene_cloud(inputs.depth, inputs.cam, inputs.wrist_prior)
    estimate = estimate_hand(scene, model, inputs.wrist_prior, config.pso, config.cost, config.roi, config.icp,
                             pipeline.link_sdfs, config.workers)
    write_output(format_hand_state(estimate, model), args.out)
    return 0
