"""estimate: object pose from one depth image"""
import argparse
import logging
from pathlib import Path

from commands.common import SceneInputs, add_scene_arguments, format_matrix, load_config, write_output
from exceptions import DatasetIOError
from models.enums import AblationVariant
from services.hand_model import load_hand_model
from services.mesh_io import write_point_cloud
from services.pipeline import ObjectModel, PipelineResult, PoseEstimationPipeline
from services.report_export import HYPOTHESES_FILENAME, export_hypotheses, format_float

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("estimate", parents=parents, help="estimate the in-hand object pose")
    add_scene_arguments(parser, needs_object=True)
    parser.add_argument("--variant", choices=[v.value for v in AblationVariant], default=AblationVariant.FULL.value,
                        help="pipeline variant (default: full)")
    parser.set_defaults(handler=cmd_estimate)


def format_result(result: PipelineResult) -> str:
    """Pose matrix followed by its scores"""
    return (format_matrix(result.pose.transform)
            + f"lcp {format_float(result.pose.lcp)}\n"
            + f"render_score {format_float(result.pose.render_score) or 'none'}\n")


def emit_intermediates(result: PipelineResult, out_dir: str) -> None:
    """ROI cloud and segmented object cloud as PLY, final candidates as CSV"""
    directory = Path(out_dir)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetIOError(directory, str(e))
    write_point_cloud(result.roi_cloud, directory / "roi_cloud.ply")
    write_point_cloud(result.object_cloud, directory / "object_cloud.ply")
    export_hypotheses(result.candidates, directory / HYPOTHESES_FILENAME)
    logger.info(f"Intermediates written to {directory}")


def cmd_estimate(args: argparse.Namespace) -> int:
    """Run the full pipeline and print the pose, LCP and render score"""
    config = load_config(args)
    inputs = SceneInputs.from_args(args, needs_object=True)
    logger.info(f"Estimating pose of {inputs.object_source} in hand {inputs.hand}")

    model = load_hand_model(inputs.hand, seed=config.seed)
    obj = ObjectModel.load(inputs.object_source, config)
    pipeline = PoseEstimationPipeline(model, config, AblationVariant(args.variant))
    result = pipeline.run(inputs.depth, inputs.cam, inputs.wrist_prior, obj)

    if args.emit_intermediates:
        emit_intermediates(result, args.emit_intermediates)
    write_output(format_result(result), args.out)
    return 0
