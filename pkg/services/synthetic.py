"""Synthetic grasp scenes with ground truth: viewpoints, grasps, rendering and datasets"""
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.spatial.transform import Rotation

from exceptions import PlacementFailedError
from models.camera import CameraIntrinsics, DepthImage
from models.enums import SegmentationLabel
from models.geometry import RigidTransform, TriangleMesh
from models.hand import FingerConfig, HandModel, HandState
from models.params import NoiseModel, SyntheticParams
from models.scene import ManifestEntry, SceneSpec
from models.sdf import SignedDistanceField
from services.geometry import sample_surface
from services.hand_model import (
    LinkSdfSet,
    load_hand_model,
    mesh_sdf,
    posed_finger_points,
    posed_hand_meshes,
    posed_hand_samples,
    sdf_query,
)
from services.mesh_io import load_mesh
from services.parallel import parallel_map
from services.render import render_depth_labels
from storage.dataset_store import DatasetStore

logger = logging.getLogger(__name__)

OBJECT_CHECK_SAMPLES = 500
POLE_TOLERANCE = 1e-9
CONTACT_BISECTIONS = 30


# ---------------------------------------------------------------------------
# Viewpoints
# ---------------------------------------------------------------------------

def look_at(position: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Camera -> world pose at position looking at target, image y pointing away from world +z

    World +y is the up reference when the view direction is (anti)parallel to +z.
    """
    forward = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(forward, up)) < POLE_TOLERANCE:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return RigidTransform(rotation=np.stack([right, down, forward], axis=1), translation=position)


def viewpoint_directions(n_azimuth: int, n_elevation: int) -> np.ndarray:
    """Unit directions on an azimuth × elevation grid; elevations are cell centers in (−90°, 90°)"""
    azimuths = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    elevations = -math.pi / 2.0 + math.pi * (np.arange(n_elevation) + 0.5) / n_elevation
    directions = [
        (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))
        for el in elevations for az in azimuths
    ]
    return np.array(directions)


def sample_viewpoints(params: SyntheticParams = SyntheticParams(),
                      center: Optional[np.ndarray] = None) -> List[RigidTransform]:
    """Camera -> wrist frame poses on spheres around the hand center, one per direction and radius"""
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    directions = viewpoint_directions(params.n_azimuth, params.n_elevation)
    return [look_at(center + radius * direction, center) for radius in params.radii for direction in directions]


# ---------------------------------------------------------------------------
# Grasps
# ---------------------------------------------------------------------------

class GraspResult(BaseModel):
    object_pose: RigidTransform
    finger_configs: List[FingerConfig]
    contacts: List[bool]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def has_contact(self) -> bool:
        return any(self.contacts)


class GraspContext:
    """Per object/hand data reused by every grasp: object SDF, link SDFs and surface samples"""

    def __init__(self, object_mesh: TriangleMesh, model: HandModel, params: SyntheticParams = SyntheticParams()):
        self.object_mesh = object_mesh
        self.model = model
        self.params = params
        lower, upper = object_mesh.bounds()
        self.object_sdf: SignedDistanceField = mesh_sdf([object_mesh], lower, upper, params.object_sdf_voxel)
        self.object_samples = sample_surface(object_mesh, OBJECT_CHECK_SAMPLES, seed=0).positions
        self.link_sdfs = LinkSdfSet(model, params.object_sdf_voxel)
        self.rest_configs = [FingerConfig.zeros(finger) for finger in model.fingers]
        self.placement_lower, self.placement_upper = placement_box(model, params.placement_expand)

    def hand_points(self, configs: Sequence[FingerConfig]) -> np.ndarray:
        state = HandState(wrist_pose=RigidTransform.identity(), finger_configs=list(configs))
        return posed_hand_samples(self.model, state).positions

    def penetration(self, object_pose: RigidTransform, configs: Sequence[FingerConfig]) -> float:
        """Deepest mutual penetration of object and hand, checked in both directions"""
        hand_in_object = sdf_query(self.object_sdf, object_pose.inverse().apply(self.hand_points(configs)))
        object_in_hand = self.link_sdfs.min_distance(object_pose.apply(self.object_samples), RigidTransform.identity(), configs)
        return max(0.0, -float(np.min(hand_in_object)), -object_in_hand)


def placement_box(model: HandModel, expand: float) -> Tuple[np.ndarray, np.ndarray]:
    """Wrist-frame box spanned by the finger links at rest, grown by expand on every side"""
    state = HandState(wrist_pose=RigidTransform.identity(),
                      finger_configs=[FingerConfig.zeros(finger) for finger in model.fingers])
    vertices = np.concatenate([mesh.transformed(pose).vertices for mesh, pose in posed_hand_meshes(model, state)[1:]])
    return vertices.min(axis=0) - expand, vertices.max(axis=0) + expand


def _min_object_distance(ctx: GraspContext, finger_index: int, angles: np.ndarray, to_object: RigidTransform) -> float:
    finger = ctx.model.fingers[finger_index]
    points = posed_finger_points(finger, FingerConfig(angles=angles), RigidTransform.identity())
    return float(np.min(sdf_query(ctx.object_sdf, to_object.apply(points))))


def close_finger(ctx: GraspContext, finger_index: int, object_pose: RigidTransform,
                 rng: np.random.Generator) -> Tuple[FingerConfig, bool]:
    """Advance the joints with random weights until a link sample touches the object or limits stop it

    Contact means the closest link sample has |object SDF| ≤ contact_tolerance;
    an overshoot is bisected back into the tolerance band.
    """
    finger = ctx.model.fingers[finger_index]
    tolerance = ctx.params.contact_tolerance
    weights = rng.uniform(0.3, 1.0, size=finger.dof)
    step = ctx.params.close_step * weights / weights.max()
    to_object = object_pose.inverse()

    angles = np.clip(np.zeros(finger.dof), finger.lower_limits, finger.upper_limits)
    while True:
        advanced = np.clip(angles + step, finger.lower_limits, finger.upper_limits)
        if np.allclose(advanced, angles):
            return FingerConfig(angles=angles), False
        distance = _min_object_distance(ctx, finger_index, advanced, to_object)
        if distance > tolerance:
            angles = advanced
            continue
        if distance >= -tolerance:
            return FingerConfig(angles=advanced), True

        low, high = angles, advanced
        for _ in range(CONTACT_BISECTIONS):
            middle = 0.5 * (low + high)
            distance = _min_object_distance(ctx, finger_index, middle, to_object)
            if abs(distance) <= tolerance:
                return FingerConfig(angles=middle), True
            if distance > tolerance:
                low = middle
            else:
                high = middle
        return FingerConfig(angles=low), False


def generate_grasp(ctx: GraspContext, rng: np.random.Generator) -> GraspResult:
    """Random collision-free object pose between the open fingers, then close every finger onto it

    Raises:
        PlacementFailedError: no placement with penetration within tolerance in placement_attempts tries
    """
    tolerance = ctx.params.contact_tolerance
    for attempt in range(ctx.params.placement_attempts):
        center = rng.uniform(ctx.placement_lower, ctx.placement_upper)
        rotation = Rotation.random(random_state=rng).as_matrix()
        object_pose = RigidTransform(rotation=rotation, translation=center)
        if ctx.penetration(object_pose, ctx.rest_configs) > tolerance:
            continue

        closed = [close_finger(ctx, i, object_pose, rng) for i in range(len(ctx.model.fingers))]
        configs = [config for config, _ in closed]
        if ctx.penetration(object_pose, configs) > tolerance:
            logger.debug(f"Placement {attempt}: closed fingers penetrate the object; resampling")
            continue
        return GraspResult(object_pose=object_pose, finger_configs=configs, contacts=[contact for _, contact in closed])
    raise PlacementFailedError()


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

class SceneRender(BaseModel):
    depth: DepthImage
    clean_depth: DepthImage
    labels: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def apply_noise(depth: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Gaussian depth noise and Bernoulli dropout on valid pixels"""
    valid = depth > 0
    jitter = rng.normal(0.0, noise.depth_sigma, size=depth.shape) if noise.depth_sigma > 0 else np.zeros(depth.shape)
    dropped = rng.random(depth.shape) < noise.dropout_rate
    noisy = np.where(valid, depth + jitter, 0.0)
    noisy[dropped & valid] = 0.0
    return np.maximum(noisy, 0.0)


def render_scene(spec: SceneSpec, model: HandModel, object_mesh: TriangleMesh) -> SceneRender:
    """Depth (noisy and clean) and per-pixel labels of the hand holding the object"""
    meshes = posed_hand_meshes(model, spec.hand_state)
    hand_count = len(meshes)
    meshes.append((object_mesh, spec.object_pose))
    clean, mesh_ids = render_depth_labels(meshes, spec.intrinsics)

    labels = np.full(mesh_ids.shape, SegmentationLabel.BACKGROUND.value, dtype=np.uint8)
    labels[(mesh_ids >= 0) & (mesh_ids < hand_count)] = SegmentationLabel.HAND.value
    labels[mesh_ids == hand_count] = SegmentationLabel.OBJECT.value

    noisy = apply_noise(clean.depth, spec.noise, np.random.default_rng(spec.seed))
    return SceneRender(depth=DepthImage(depth=noisy), clean_depth=clean, labels=labels)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def source_name(source: str) -> str:
    """Short name of an object or hand source for scene ids"""
    if source.startswith("primitive:"):
        return source.split(":", 1)[1]
    return Path(source).stem


def intrinsics_for(params: SyntheticParams) -> CameraIntrinsics:
    return CameraIntrinsics.centered(params.width, params.height, params.fx, params.fy)


def build_scene_spec(scene_id: str, object_id: str, hand_id: str, ctx: GraspContext, viewpoints: Sequence[RigidTransform],
                     rng: np.random.Generator) -> Tuple[SceneSpec, GraspResult]:
    """Grasp with contact, random viewpoint and noise seed drawn from the scene's own stream

    Raises:
        PlacementFailedError: no grasp with contact within max_scene_attempts_factor grasps
    """
    for _ in range(ctx.params.max_scene_attempts_factor):
        try:
            grasp = generate_grasp(ctx, rng)
        except PlacementFailedError:
            continue
        if grasp.has_contact:
            break
    else:
        raise PlacementFailedError(f"placement failed for scene {scene_id}")

    camera_pose = viewpoints[int(rng.integers(len(viewpoints)))]
    wrist_pose = camera_pose.inverse()
    spec = SceneSpec(
        scene_id=scene_id,
        object_id=object_id,
        hand_id=hand_id,
        camera_pose=camera_pose,
        intrinsics=intrinsics_for(ctx.params),
        object_pose=wrist_pose @ grasp.object_pose,
        hand_state=HandState(wrist_pose=wrist_pose, finger_configs=grasp.finger_configs),
        noise=ctx.params.noise,
        seed=int(rng.integers(2 ** 31 - 1))
    )
    return spec, grasp


def generate_dataset(objects: Sequence[str], hands: Sequence[str], out_dir: Union[str, Path],
                     params: SyntheticParams = SyntheticParams(), master_seed: int = 0,
                     workers: int = 1) -> List[ManifestEntry]:
    """n_per_combination scenes for every object × hand, written under out_dir with a manifest

    Scene k draws from its own stream seeded by (master_seed, k), so the
    output does not depend on the worker count.
    """
    store = DatasetStore(out_dir)
    store.connect(create=True)
    try:
        slots = []
        for hand_id in hands:
            model = load_hand_model(hand_id)
            viewpoints = sample_viewpoints(params, model.roi_center)
            for object_id in objects:
                ctx = GraspContext(load_mesh(object_id), model, params)
                for k in range(params.n_per_combination):
                    scene_id = f"{source_name(object_id)}-{source_name(hand_id)}-{k:04d}"
                    slots.append((len(slots), scene_id, object_id, hand_id, ctx, viewpoints))
        logger.info(f"Generating {len(slots)} scenes into {out_dir}")

        def make_scene(slot) -> ManifestEntry:
            index, scene_id, object_id, hand_id, ctx, viewpoints = slot
            rng = np.random.default_rng(np.random.SeedSequence([master_seed, index]))
            spec, grasp = build_scene_spec(scene_id, object_id, hand_id, ctx, viewpoints, rng)
            rendered = render_scene(spec, ctx.model, ctx.object_mesh)
            paths = store.write_scene(scene_id, rendered.depth, spec.intrinsics, rendered.labels)
            return ManifestEntry.from_spec(spec, *paths, finger_contacts=grasp.contacts)

        entries = parallel_map(make_scene, slots, workers)
        store.write_manifest(entries)
        return entries
    finally:
        store.close()
