"""Mesh and point cloud file I/O plus the bundled primitive objects"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
import trimesh

from exceptions import DatasetIOError, InputError
from models.enums import Primitive
from models.geometry import OrientedPointCloud, TriangleMesh
from services.geometry import estimate_normals

logger = logging.getLogger(__name__)

PRIMITIVE_PREFIX = "primitive:"
# Neighborhood for clouds stored without normals
NORMAL_NEIGHBORS = 10

# Dimensions of the procedurally generated objects, meters
CYLINDER_DIAMETER = 0.035
CYLINDER_LENGTH = 0.064
ELLIPSOID_LENGTH = 0.064
ELLIPSOID_WIDTH = 0.035
CUBOID_SIDE = 0.03
CUBOID_LENGTH = 0.064


def from_trimesh(mesh: trimesh.Trimesh) -> TriangleMesh:
    """Clean a trimesh (merge duplicates, drop zero-area faces, outward winding) and convert"""
    mesh = mesh.copy()
    mesh.merge_vertices()
    mesh.update_faces(mesh.nondegenerate_faces())
    mesh.remove_unreferenced_vertices()
    if mesh.is_watertight:
        mesh.fix_normals()
    return TriangleMesh(vertices=mesh.vertices, triangles=mesh.faces)


def make_primitive(primitive: Primitive) -> TriangleMesh:
    """Primitive object centered at the origin, long axis along z"""
    if primitive is Primitive.CYLINDER:
        mesh = trimesh.creation.cylinder(radius=CYLINDER_DIAMETER / 2.0, height=CYLINDER_LENGTH, sections=48)
    elif primitive is Primitive.ELLIPSOID:
        mesh = trimesh.creation.icosphere(subdivisions=3, radius=1.0)
        mesh.apply_scale([ELLIPSOID_WIDTH / 2.0, ELLIPSOID_WIDTH / 2.0, ELLIPSOID_LENGTH / 2.0])
    else:
        mesh = trimesh.creation.box(extents=[CUBOID_SIDE, CUBOID_SIDE, CUBOID_LENGTH])
    return from_trimesh(mesh)


def load_mesh(source: Union[str, Path]) -> TriangleMesh:
    """Load an OBJ/PLY mesh in meters, or build a primitive from 'primitive:<name>'

    Raises:
        InputError: unknown primitive name
        DatasetIOError: the file is missing or holds no triangles
    """
    source = str(source)
    if source.startswith(PRIMITIVE_PREFIX):
        name = source[len(PRIMITIVE_PREFIX):]
        try:
            return make_primitive(Primitive(name))
        except ValueError:
            raise InputError(f"unknown primitive '{name}'")

    path = Path(source)
    if not path.is_file():
        raise DatasetIOError(path, "mesh file not found")
    try:
        loaded = trimesh.load(path, force="mesh")
    except Exception as e:
        logger.error(f"Error loading mesh {path}: {e}")
        raise DatasetIOError(path, f"cannot parse mesh ({e})")
    if not isinstance(loaded, trimesh.Trimesh) or len(loaded.faces) == 0:
        raise DatasetIOError(path, "file holds no triangles")
    logger.debug(f"Loaded mesh {path}: {len(loaded.vertices)} vertices, {len(loaded.faces)} faces")
    return from_trimesh(loaded)


def load_point_cloud(path: Union[str, Path]) -> OrientedPointCloud:
    """Load a PLY point cloud; nx, ny, nz properties are used when present

    Raises:
        DatasetIOError: the file is missing or unparseable
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(path, "point cloud file not found")
    try:
        loaded = trimesh.load(path, process=False)
    except Exception as e:
        raise DatasetIOError(path, f"cannot parse point cloud ({e})")
    if len(loaded.vertices) == 0:
        raise DatasetIOError(path, "file holds no points")

    positions = np.asarray(loaded.vertices, dtype=float)
    raw = loaded.metadata.get("_ply_raw", {}).get("vertex", {}).get("data")
    # structured array for binary files, property dict for ASCII ones
    names = () if raw is None else (raw.dtype.names if hasattr(raw, "dtype") else tuple(raw))
    if all(name in names for name in ("nx", "ny", "nz")):
        normals = np.stack([raw["nx"], raw["ny"], raw["nz"]], axis=1).astype(float)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(lengths == 0):
            raise DatasetIOError(path, "zero-length normal")
        normals /= lengths
        valid = np.asarray(raw["valid_normal"]).astype(bool) if "valid_normal" in names else None
        logger.debug(f"Loaded {len(positions)} oriented points from {path}")
        return OrientedPointCloud(positions=positions, normals=normals, valid_normals=valid)

    logger.warning(f"{path} has no normals; estimating them")
    return estimate_normals(positions, min(NORMAL_NEIGHBORS, len(positions)))


def write_point_cloud(cloud: OrientedPointCloud, path: Union[str, Path]) -> None:
    """Write an ASCII PLY with positions, normals and a per-vertex valid_normal flag"""
    path = Path(path)
    mesh = trimesh.Trimesh(vertices=cloud.positions, vertex_normals=cloud.normals, process=False)
    mesh.vertex_attributes["valid_normal"] = cloud.normal_mask.astype(np.uint8)
    try:
        mesh.export(path, file_type="ply", encoding="ascii", vertex_normal=True, include_attributes=True)
    except OSError as e:
        raise DatasetIOError(path, str(e))
    logger.debug(f"Wrote {len(cloud)} points to {path}")
