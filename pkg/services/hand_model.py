"""Articulated hand: kinematics file, forward kinematics, ROI, wrist refinement, SDF and segmentation"""
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import ndimage
from scipy.spatial.transform import Rotation

from config import settings
from exceptions import (
    DatasetIOError,
    DegenerateCorrespondenceError,
    InputError,
    JointLimitError,
    NoObjectPointsError,
    RoiEmptyError,
)
from models.geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from models.hand import FingerChain, FingerConfig, HandModel, HandState, Joint
from models.params import IcpParams, LcpParams, RoiParams, SdfParams
from models.sdf import SignedDistanceField
from services.geometry import (
    SpatialIndex,
    dense_surface_points,
    lcp_score,
    point_to_plane_icp,
    sample_surface,
    to_trimesh,
)
from services.mesh_io import load_mesh

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_LINK = 500
# Sub-voxel offset of parity rays so they never graze shared triangle edges
RAY_JITTER = (1.234567e-4, 2.345678e-4)


# ---------------------------------------------------------------------------
# Hand kinematics file
# ---------------------------------------------------------------------------

class JointFile(BaseModel):
    axis: List[float]
    translation: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="parent-relative, meters")
    rotation: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="parent-relative axis-angle, radians")
    lower: float
    upper: float
    mesh: str

    model_config = ConfigDict(extra="forbid")


class FingerFile(BaseModel):
    name: str
    joints: List[JointFile]

    model_config = ConfigDict(extra="forbid")


class HandFile(BaseModel):
    """Schema of the TOML hand kinematics file"""

    name: str
    wrist_mesh: str
    roi_dims: List[float]
    roi_center: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    fingers: List[FingerFile]

    model_config = ConfigDict(extra="forbid")


def resolve_hand_path(source: Union[str, Path]) -> Path:
    """A bundled hand name ('t42') or a path to a kinematics file"""
    path = Path(source)
    if path.suffix == ".toml":
        return path
    return settings.assets_dir / "hands" / f"{source}.toml"


def load_hand_model(source: Union[str, Path], samples_per_link: int = DEFAULT_SAMPLES_PER_LINK,
                    seed: int = 0) -> HandModel:
    """Parse a hand kinematics file and sample every link surface

    Mesh paths are relative to the file's directory.

    Raises:
        DatasetIOError: the file or one of its meshes is missing
        InputError: the file does not match the schema
    """
    path = resolve_hand_path(source)
    if not path.is_file():
        raise DatasetIOError(path, "hand kinematics file not found")
    try:
        hand_file = HandFile.model_validate(tomllib.loads(path.read_text(encoding="utf-8")))
    except (tomllib.TOMLDecodeError, ValidationError) as e:
        logger.error(f"Invalid hand kinematics file {path}: {e}")
        raise InputError(f"invalid hand kinematics file {path}: {e}")

    base_dir = path.parent
    sample_seed = seed
    wrist_mesh = load_mesh(base_dir / hand_file.wrist_mesh)
    wrist_samples = sample_surface(wrist_mesh, samples_per_link, seed=sample_seed)

    fingers = []
    for finger_file in hand_file.fingers:
        joints, meshes, samples = [], [], []
        for joint_file in finger_file.joints:
            sample_seed += 1
            mesh = load_mesh(base_dir / joint_file.mesh)
            joints.append(Joint(
                axis=joint_file.axis,
                origin=RigidTransform.from_rotvec(joint_file.rotation, joint_file.translation),
                lower=joint_file.lower,
                upper=joint_file.upper
            ))
            meshes.append(mesh)
            samples.append(sample_surface(mesh, samples_per_link, seed=sample_seed))
        fingers.append(FingerChain(name=finger_file.name, joints=joints, link_meshes=meshes, link_point_samples=samples))

    logger.info(f"Loaded hand '{hand_file.name}' with {len(fingers)} fingers from {path}")
    return HandModel(
        name=hand_file.name,
        wrist_mesh=wrist_mesh,
        wrist_point_samples=wrist_samples,
        fingers=fingers,
        roi_dims=hand_file.roi_dims,
        roi_center=hand_file.roi_center
    )


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def joint_transform(joint: Joint, angle: float) -> RigidTransform:
    """Parent link -> child link at the given joint angle"""
    return joint.origin @ RigidTransform(rotation=Rotation.from_rotvec(joint.axis * angle).as_matrix())


def forward_kinematics(finger: FingerChain, config: FingerConfig, wrist_pose: RigidTransform) -> List[RigidTransform]:
    """Pose of every link: wrist_pose ∘ joint_0(θ_0) ∘ … ∘ joint_i(θ_i)

    Raises:
        JointLimitError: an angle is outside its joint's limits
    """
    if not config.within_limits(finger):
        raise JointLimitError(f"joint limit violation on finger '{finger.name}': {list(config.angles)}")
    poses = []
    pose = wrist_pose
    for joint, angle in zip(finger.joints, config.angles):
        pose = pose @ joint_transform(joint, float(angle))
        poses.append(pose)
    return poses


def finger_base_pose(finger: FingerChain, wrist_pose: RigidTransform) -> RigidTransform:
    """Rest-pose frame of the first joint"""
    return wrist_pose @ finger.joints[0].origin


def posed_hand_meshes(model: HandModel, state: HandState) -> List[Tuple[TriangleMesh, RigidTransform]]:
    """Wrist mesh followed by every link mesh, each with its pose"""
    meshes = [(model.wrist_mesh, state.wrist_pose)]
    for finger, config in zip(model.fingers, state.finger_configs):
        for mesh, pose in zip(finger.link_meshes, forward_kinematics(finger, config, state.wrist_pose)):
            meshes.append((mesh, pose))
    return meshes


def posed_finger_points(finger: FingerChain, config: FingerConfig, wrist_pose: RigidTransform) -> np.ndarray:
    """Finger link samples P_F under the given configuration"""
    poses = forward_kinematics(finger, config, wrist_pose)
    return np.concatenate([pose.apply(samples.positions) for pose, samples in zip(poses, finger.link_point_samples)])


def posed_hand_samples(model: HandModel, state: HandState) -> OrientedPointCloud:
    """Wrist and link surface samples under the given hand state"""
    positions = [state.wrist_pose.apply(model.wrist_point_samples.positions)]
    normals = [state.wrist_pose.apply_normals(model.wrist_point_samples.normals)]
    for finger, config in zip(model.fingers, state.finger_configs):
        for samples, pose in zip(finger.link_point_samples, forward_kinematics(finger, config, state.wrist_pose)):
            positions.append(pose.apply(samples.positions))
            normals.append(pose.apply_normals(samples.normals))
    return OrientedPointCloud(positions=np.concatenate(positions), normals=np.concatenate(normals))


# ---------------------------------------------------------------------------
# Region of interest and wrist refinement
# ---------------------------------------------------------------------------

def roi_bounds(model: HandModel, margin_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """Wrist-frame ROI box: hand dims plus margin_fraction of them on each side"""
    half = model.roi_dims * (0.5 + margin_fraction)
    return model.roi_center - half, model.roi_center + half


def roi_mask(positions: np.ndarray, wrist_pose: RigidTransform, model: HandModel,
             params: RoiParams = RoiParams()) -> np.ndarray:
    lower, upper = roi_bounds(model, params.margin_fraction)
    local = wrist_pose.inverse().apply(positions)
    return np.all((local >= lower) & (local <= upper), axis=1)


def extract_roi(scene: OrientedPointCloud, wrist_pose: RigidTransform, model: HandModel,
                params: RoiParams = RoiParams()) -> OrientedPointCloud:
    """Scene points inside the ROI box, pixel links preserved

    Raises:
        RoiEmptyError: no scene point falls inside the box
    """
    mask = roi_mask(scene.positions, wrist_pose, model, params) if len(scene) else np.zeros(0, dtype=bool)
    if not np.any(mask):
        raise RoiEmptyError()
    logger.info(f"ROI holds {np.count_nonzero(mask)} of {len(scene)} scene points")
    return scene.subset(mask)


def refine_wrist_pose(points: OrientedPointCloud, model: HandModel, initial: RigidTransform,
                      icp: IcpParams = IcpParams(), lcp: LcpParams = LcpParams()) -> Tuple[RigidTransform, bool]:
    """Align the wrist samples to the ROI cloud with point-to-plane ICP

    Returns:
        (wrist pose, degenerate) where degenerate flags that ICP lost its
        correspondences and the initial pose was kept. The refined pose is only
        accepted when its wrist-sample LCP is not lower than the initial one.
    """
    if len(points) == 0:
        raise ValueError("Wrist refinement needs a nonempty cloud")
    index = SpatialIndex(points.positions)
    try:
        refined, residual = point_to_plane_icp(model.wrist_point_samples, points, index, initial, icp, lcp)
    except DegenerateCorrespondenceError as e:
        logger.warning("Wrist ICP degenerated; keeping the wrist prior")
        return e.transform, True

    before = lcp_score(model.wrist_point_samples, index, initial, lcp)
    after = lcp_score(model.wrist_point_samples, index, refined, lcp)
    if after < before:
        logger.info(f"Wrist ICP lowered LCP ({before:.3f} -> {after:.3f}); keeping the wrist prior")
        return initial, False
    logger.info(f"Wrist refined: LCP {before:.3f} -> {after:.3f}, residual {residual:.2e}")
    return refined, False


# ---------------------------------------------------------------------------
# Signed distance fields
# ---------------------------------------------------------------------------

def _parity_inside(corners: np.ndarray, origin: np.ndarray, dims: Sequence[int], voxel_size: float,
                   axis: int) -> np.ndarray:
    """Inside test by counting crossings of axis-parallel rays through voxel centers"""
    u_axis, w_axis = [a for a in range(3) if a != axis]
    n_a, n_u, n_w = dims[axis], dims[u_axis], dims[w_axis]
    crossings = np.zeros((n_a + 1, n_u, n_w), dtype=np.int32)
    ou = origin[u_axis] + RAY_JITTER[0] * voxel_size
    ow = origin[w_axis] + RAY_JITTER[1] * voxel_size

    for tri in corners:
        pu, pw, pa = tri[:, u_axis], tri[:, w_axis], tri[:, axis]
        j0 = max(0, int(np.ceil((pu.min() - ou) / voxel_size)))
        j1 = min(n_u - 1, int(np.floor((pu.max() - ou) / voxel_size)))
        k0 = max(0, int(np.ceil((pw.min() - ow) / voxel_size)))
        k1 = min(n_w - 1, int(np.floor((pw.max() - ow) / voxel_size)))
        if j0 > j1 or k0 > k1:
            continue
        v0u, v0w = pu[1] - pu[0], pw[1] - pw[0]
        v1u, v1w = pu[2] - pu[0], pw[2] - pw[0]
        denom = v0u * v1w - v1u * v0w
        if abs(denom) < 1e-18:
            continue
        j, k = np.meshgrid(np.arange(j0, j1 + 1), np.arange(k0, k1 + 1), indexing="ij")
        qu = ou + j * voxel_size - pu[0]
        qw = ow + k * voxel_size - pw[0]
        b1 = (qu * v1w - v1u * qw) / denom
        b2 = (v0u * qw - qu * v0w) / denom
        b0 = 1.0 - b1 - b2
        hit = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not np.any(hit):
            continue
        along = b0[hit] * pa[0] + b1[hit] * pa[1] + b2[hit] * pa[2]
        first = np.clip(np.ceil((along - origin[axis]) / voxel_size).astype(int), 0, n_a)
        np.add.at(crossings, (first, j[hit], k[hit]), 1)

    inside = (np.cumsum(crossings[:-1], axis=0) % 2) == 1
    return np.moveaxis(inside, 0, axis)


def mesh_inside_mask(mesh: TriangleMesh, origin: np.ndarray, dims: Sequence[int], voxel_size: float) -> np.ndarray:
    """Majority vote of ray parity along the three grid axes"""
    if not to_trimesh(mesh).is_watertight:
        logger.warning("SDF component is not watertight; sign from 3-axis ray parity vote")
    corners = mesh.corners()
    votes = sum(_parity_inside(corners, origin, dims, voxel_size, axis).astype(np.int8) for axis in range(3))
    return votes >= 2


def mesh_sdf(meshes: Sequence[TriangleMesh], lower: np.ndarray, upper: np.ndarray, voxel_size: float,
             margin_voxels: int = 5, spacing_fraction: float = 0.5,
             pose: Optional[RigidTransform] = None) -> SignedDistanceField:
    """Signed distance to the union of meshes, all given in the grid frame

    The grid covers [lower, upper] plus margin_voxels on every side. Unsigned
    distances come from a dense deterministic surface sampling
    (spacing_fraction · voxel_size), signs from ray parity.
    """
    lower = np.asarray(lower, dtype=float) - margin_voxels * voxel_size
    upper = np.asarray(upper, dtype=float) + margin_voxels * voxel_size
    dims = tuple(int(n) for n in np.ceil((upper - lower) / voxel_size).astype(int) + 1)

    surface = np.concatenate([dense_surface_points(mesh, spacing_fraction * voxel_size) for mesh in meshes])
    axes = [lower[a] + voxel_size * np.arange(dims[a]) for a in range(3)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    distances, _ = SpatialIndex(surface).query(centers)
    distances = distances.reshape(dims)

    inside = np.zeros(dims, dtype=bool)
    for mesh in meshes:
        inside |= mesh_inside_mask(mesh, lower, dims, voxel_size)

    values = np.where(inside, -distances, distances)
    logger.debug(f"SDF grid {dims} at {voxel_size * 1000:.1f} mm, {np.count_nonzero(inside)} inside voxels")
    return SignedDistanceField(
        pose=pose or RigidTransform.identity(),
        origin=lower,
        voxel_size=voxel_size,
        values=values
    )


def compute_sdf(model: HandModel, state: HandState, voxel_size: float = 0.002,
                roi: RoiParams = RoiParams(), params: SdfParams = SdfParams()) -> SignedDistanceField:
    """SDF of the posed hand (wrist and every link) on a grid aligned with the wrist frame

    The grid covers the ROI box plus params.margin_voxels voxels on every side.
    """
    if voxel_size <= 0:
        raise ValueError("SDF voxel size must be positive")
    if not state.matches(model):
        raise ValueError("Hand state must hold one configuration per finger")
    rest = HandState(wrist_pose=RigidTransform.identity(), finger_configs=state.finger_configs)
    meshes = [mesh.transformed(pose) for mesh, pose in posed_hand_meshes(model, rest)]
    lower, upper = roi_bounds(model, roi.margin_fraction)
    return mesh_sdf(meshes, lower, upper, voxel_size, params.margin_voxels, params.surface_spacing_fraction,
                    pose=state.wrist_pose)


def sdf_query(sdf: SignedDistanceField, points: np.ndarray) -> Union[float, np.ndarray]:
    """Trilinear SDF lookup; outside the grid, distance to the grid box plus the largest stored value"""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    local = sdf.pose.inverse().apply(points.reshape(-1, 3))

    grid_max = sdf.origin + sdf.voxel_size * (np.array(sdf.dims) - 1)
    clamped = np.clip(local, sdf.origin, grid_max)
    outside_distance = np.linalg.norm(local - clamped, axis=1)

    coordinates = ((clamped - sdf.origin) / sdf.voxel_size).T
    values = ndimage.map_coordinates(sdf.values, coordinates, order=1, mode="nearest")
    outside = outside_distance > 0
    values[outside] = outside_distance[outside] + max(sdf.max_value, 0.0)
    return float(values[0]) if single else values


def segment_mask(points: OrientedPointCloud, sdf: SignedDistanceField, epsilon: float) -> np.ndarray:
    """True for points at least epsilon away from the hand surface"""
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    return sdf_query(sdf, points.positions) >= epsilon


def segment_object_cloud(points: OrientedPointCloud, sdf: SignedDistanceField, epsilon: float = 0.003) -> OrientedPointCloud:
    """Drop hand points (SDF below epsilon); the rest is the object cloud P_O

    Raises:
        NoObjectPointsError: every point lies on or inside the hand
    """
    mask = segment_mask(points, sdf, epsilon)
    if not np.any(mask):
        raise NoObjectPointsError()
    logger.info(f"Segmented {np.count_nonzero(mask)} object points out of {len(points)}")
    return points.subset(mask)


class LinkSdfSet:
    """Per-link SDFs in each link's own frame, posed on demand

    Built once per hand model and resolution; used for collision penalties and
    contact checks where a full hand SDF per candidate state would be too slow.
    """

    def __init__(self, model: HandModel, voxel_size: float, margin_voxels: int = 5):
        self.model = model
        self.voxel_size = voxel_size
        self.wrist = self._link_sdf(model.wrist_mesh, voxel_size, margin_voxels)
        self.fingers = [
            [self._link_sdf(mesh, voxel_size, margin_voxels) for mesh in finger.link_meshes]
            for finger in model.fingers
        ]

    @staticmethod
    def _link_sdf(mesh: TriangleMesh, voxel_size: float, margin_voxels: int) -> SignedDistanceField:
        lower, upper = mesh.bounds()
        return mesh_sdf([mesh], lower, upper, voxel_size, margin_voxels)

    def min_distance(self, points: np.ndarray, wrist_pose: RigidTransform,
                     finger_configs: Sequence[Optional[FingerConfig]]) -> float:
        """Smallest signed distance from points to the wrist and every posed finger

        Fingers whose configuration is None are skipped.
        """
        best = float(np.min(sdf_query(self.wrist.model_copy(update={"pose": wrist_pose}), points)))
        for finger, sdfs, config in zip(self.model.fingers, self.fingers, finger_configs):
            if config is None:
                continue
            for sdf, pose in zip(sdfs, forward_kinematics(finger, config, wrist_pose)):
                best = min(best, float(np.min(sdf_query(sdf.model_copy(update={"pose": pose}), points))))
        return best
