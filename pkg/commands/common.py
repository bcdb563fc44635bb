"""Shared command helpers: configuration loading, input parsing and the error boundary"""
import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from config import settings
from exceptions import DatasetIOError, InputError, PoseEstimationError
from models.camera import CameraIntrinsics, DepthImage
from models.enums import ErrorCategory
from models.geometry import OrientedPointCloud, RigidTransform
from models.params import PipelineConfig
from models.scene import ManifestEntry
from services.mesh_io import load_point_cloud
from services.render import read_depth
from storage.dataset_store import open_dataset_for

logger = logging.getLogger(__name__)

INTERNAL_EXIT_CODE = 4


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Pipeline config from --config (or defaults) with --seed/--workers applied

    Without a config file the seed and worker count fall back to the runtime settings.

    Raises:
        DatasetIOError: the config file is missing
        InputError: the config file does not validate
    """
    seed, workers = args.seed, args.workers
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DatasetIOError(path, "config file not found")
        try:
            config = PipelineConfig.load(path)
        except ValidationError as e:
            raise InputError(f"invalid config {path}: {e.error_count()} errors ({_first_error(e)})")
    else:
        config = PipelineConfig()
        seed = settings.seed if seed is None else seed
        workers = settings.workers if workers is None else workers
    return config.with_overrides(seed=seed, workers=workers)


def _first_error(e: ValidationError) -> str:
    error = e.errors()[0]
    location = ".".join(str(part) for part in error["loc"])
    return f"{location}: {error['msg']}"


def parse_pose(text: str) -> RigidTransform:
    """16 row-major numbers, inline (comma or space separated) or in a file

    Raises:
        InputError: not 16 numbers or not a rigid transform
    """
    path = Path(text)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    try:
        values = [float(token) for token in re.split(r"[\s,]+", text.strip()) if token]
    except ValueError:
        raise InputError(f"pose '{text}' is not a list of numbers")
    if len(values) != 16:
        raise InputError(f"pose needs 16 row-major values, got {len(values)}")
    try:
        return RigidTransform.from_matrix(np.array(values).reshape(4, 4), project=True)
    except ValidationError as e:
        raise InputError(f"pose is not a rigid transform ({_first_error(e)})")


def parse_intrinsics(path: Optional[str]) -> Optional[CameraIntrinsics]:
    """Intrinsics from a JSON file with fx, fy, cx, cy, width and height"""
    if path is None:
        return None
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(path, "intrinsics file not found")
    try:
        return CameraIntrinsics.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InputError(f"invalid intrinsics {path}: {_first_error(e)}")


def find_scene(manifest: str, scene_id: Optional[str]) -> Tuple[ManifestEntry, Path]:
    """Manifest entry by id (the first one when no id is given) and the dataset root"""
    store = open_dataset_for(manifest)
    entries = store.read_manifest()
    for entry in entries:
        if scene_id is None or entry.scene_id == scene_id:
            return entry, store.root
    raise InputError(f"scene '{scene_id}' not in {manifest}")


class SceneInputs:
    """Depth image (or a PLY scene cloud), intrinsics, hand and wrist prior of one estimate/hand invocation"""

    def __init__(self, depth: Optional[DepthImage], cam: Optional[CameraIntrinsics], hand: str,
                 wrist_prior: RigidTransform, object_source: Optional[str] = None,
                 cloud: Optional[OrientedPointCloud] = None):
        self.depth = depth
        self.cam = cam
        self.hand = hand
        self.wrist_prior = wrist_prior
        self.object_source = object_source
        self.cloud = cloud

    @classmethod
    def from_args(cls, args: argparse.Namespace, needs_object: bool) -> "SceneInputs":
        """Explicit flags win over values taken from a manifest scene

        Raises:
            InputError: a required input is missing
        """
        entry, root = (None, None)
        if args.manifest:
            entry, root = find_scene(args.manifest, args.scene)

        cloud_path = getattr(args, "cloud", None)
        depth_path = args.depth or (str(root / entry.depth_path) if entry else None)
        hand = args.hand or (entry.hand_id if entry else None)
        object_source = getattr(args, "object", None) or (entry.object_id if entry else None)
        if depth_path is None and cloud_path is None:
            raise InputError("missing --depth or --cloud" if hasattr(args, "cloud") else "missing --depth")
        if hand is None:
            raise InputError("missing --hand")
        if needs_object and object_source is None:
            raise InputError("missing --object")

        if args.wrist_prior:
            wrist_prior = parse_pose(args.wrist_prior)
        elif entry is not None:
            wrist_prior = entry.wrist_transform()
        else:
            raise InputError("missing --wrist-prior")

        if cloud_path:
            return cls(None, None, hand, wrist_prior, object_source, cloud=load_point_cloud(cloud_path))
        cam = parse_intrinsics(args.intrinsics) or (entry.intrinsics if entry else None)
        depth, cam = read_depth(depth_path, cam)
        return cls(depth, cam, hand, wrist_prior, object_source)


def add_scene_arguments(parser: argparse.ArgumentParser, needs_object: bool) -> None:
    parser.add_argument("--depth", help="float32 depth file (with .txt header) or 16-bit PGM in mm")
    parser.add_argument("--intrinsics", help="JSON intrinsics file; required for PGM depth")
    parser.add_argument("--hand", help="bundled hand name or hand kinematics TOML file")
    parser.add_argument("--wrist-prior", help="wrist -> camera pose, 16 row-major values or a file holding them")
    if needs_object:
        parser.add_argument("--object", help="object mesh (OBJ/PLY) or primitive:<name>")
    parser.add_argument("--manifest", help="take missing inputs from a dataset manifest scene")
    parser.add_argument("--scene", help="scene id within --manifest (default: first scene)")


def format_matrix(transform: RigidTransform) -> str:
    """Four lines of four space-separated values"""
    return "\n".join(" ".join(f"{value:.9g}" for value in row) for row in transform.as_matrix()) + "\n"


def write_output(text: str, out: Optional[str]) -> None:
    """Print to stdout, or write to --out when given"""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(path, str(e))
    logger.info(f"Wrote {path}")


def report_error(category: ErrorCategory, message: str) -> None:
    sys.stderr.write(f"error: {category.value}: {message}\n")


def run_guarded(command: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    """Run a command, turning exceptions into an error line and an exit code"""
    try:
        return command(args)
    except PoseEstimationError as e:
        logger.error(f"Command '{args.command}' failed: {e}")
        report_error(e.category, str(e))
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Command '{args.command}' got invalid input: {e}")
        report_error(ErrorCategory.INPUT, _first_error(e))
        return InputError.exit_code
    except Exception as e:
        logger.exception(f"Command '{args.command}' crashed: {e}")
        report_error(ErrorCategory.INTERNAL, str(e) or type(e).__name__)
        return INTERNAL_EXIT_CODE
