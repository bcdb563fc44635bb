import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from exceptions import DatasetIOError, InputError
from models.camera import CameraIntrinsics, DepthImage
from models.scene import ManifestEntry
from services.render import read_depth, write_depth_pgm, write_depth_raw, write_label_pgm

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SCENES_DIR = "scenes"


class DatasetStore:
    """Class to handle a synthetic dataset directory: scene images plus a line-delimited manifest"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.is_connected = False

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def connect(self, create: bool = False):
        """Opens the dataset directory, creating it when asked"""
        try:
            logger.info(f"Opening dataset at {self.root}")
            if create:
                (self.root / SCENES_DIR).mkdir(parents=True, exist_ok=True)
            elif not self.root.is_dir():
                raise DatasetIOError(self.root, "dataset directory not found")
            self.is_connected = True
        except OSError as e:
            logger.error(f"Error opening dataset {self.root}: {e}")
            self.is_connected = False
            raise DatasetIOError(self.root, str(e))

    def close(self):
        if self.is_connected:
            self.is_connected = False
            logger.info(f"Dataset {self.root} closed")

    def _require_connection(self):
        if not self.is_connected:
            raise RuntimeError("Dataset store is not connected")

    def scene_paths(self, scene_id: str) -> Tuple[str, str, str]:
        """Relative paths of the float depth, PGM depth and segmentation files of a scene"""
        return (
            f"{SCENES_DIR}/{scene_id}_depth.f32",
            f"{SCENES_DIR}/{scene_id}_depth.pgm",
            f"{SCENES_DIR}/{scene_id}_seg.pgm",
        )

    def write_scene(self, scene_id: str, depth: DepthImage, cam: CameraIntrinsics,
                    labels: np.ndarray) -> Tuple[str, str, str]:
        """Write the depth image in both formats and the segmentation image"""
        self._require_connection()
        depth_path, pgm_path, segmentation_path = self.scene_paths(scene_id)
        write_depth_raw(depth, cam, self.root / depth_path)
        write_depth_pgm(depth, self.root / pgm_path)
        write_label_pgm(labels, self.root / segmentation_path)
        return depth_path, pgm_path, segmentation_path

    def write_manifest(self, entries: List[ManifestEntry]) -> Path:
        """Replace the manifest with one JSON record per line"""
        self._require_connection()
        try:
            with open(self.manifest_path, "w", encoding="utf-8") as f:
                for entry in entries:
                    f.write(entry.model_dump_json() + "\n")
        except OSError as e:
            logger.error(f"Error writing manifest: {e}")
            raise DatasetIOError(self.manifest_path, str(e))
        logger.info(f"Wrote {len(entries)} manifest entries to {self.manifest_path}")
        return self.manifest_path

    def read_manifest(self, limit: Optional[int] = None) -> List[ManifestEntry]:
        self._require_connection()
        return read_manifest(self.manifest_path, limit)

    def load_depth(self, entry: ManifestEntry) -> Tuple[DepthImage, CameraIntrinsics]:
        self._require_connection()
        return read_depth(self.root / entry.depth_path, entry.intrinsics)


def read_manifest(path: Union[str, Path], limit: Optional[int] = None) -> List[ManifestEntry]:
    """Parse a manifest file; blank lines are skipped

    Raises:
        DatasetIOError: the file is missing
        InputError: a line is not a valid record
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(path, "manifest not found")
    entries = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append(ManifestEntry.model_validate_json(line))
        except ValidationError as e:
            raise InputError(f"{path}:{number}: invalid manifest record ({e.error_count()} errors)")
        if limit is not None and len(entries) >= limit:
            break
    return entries


def open_dataset_for(manifest_path: Union[str, Path]) -> DatasetStore:
    """Connected store rooted at the manifest's directory"""
    store = DatasetStore(Path(manifest_path).parent)
    store.connect()
    return store
