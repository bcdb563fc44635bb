"""Pytest fixtures for testing"""
import math

import numpy as np
import pytest
import trimesh
from scipy.spatial.transform import Rotation

from models.camera import CameraIntrinsics
from models.enums import PipelineStage, Primitive
from models.evaluation import SceneResult
from models.geometry import RigidTransform
from models.scene import ManifestEntry, pose_to_row_major
from services.hand_model import load_hand_model
from services.mesh_io import from_trimesh, make_primitive


@pytest.fixture(scope="session")
def t42_hand():
    """Bundled two-finger hand with a light surface sampling"""
    return load_hand_model("t42", samples_per_link=200)


@pytest.fixture(scope="session")
def cube_mesh():
    """4 cm cube centered at the origin"""
    return from_trimesh(trimesh.creation.box(extents=[0.04, 0.04, 0.04]))


@pytest.fixture(scope="session")
def cuboid_mesh():
    """Bundled cuboid primitive"""
    return make_primitive(Primitive.CUBOID)


@pytest.fixture
def small_camera():
    """Low-resolution pinhole camera for fast rendering"""
    return CameraIntrinsics.centered(160, 120, 200.0, 200.0)


@pytest.fixture
def make_pose():
    """Factory for random rigid transforms from a generator"""
    def factory(rng: np.random.Generator, max_translation: float = 0.1) -> RigidTransform:
        return RigidTransform(
            rotation=Rotation.random(random_state=rng).as_matrix(),
            translation=rng.uniform(-max_translation, max_translation, 3)
        )
    return factory


@pytest.fixture
def wrist_in_view():
    """Wrist pose 40 cm in front of the camera, fingers pointing away from it"""
    return RigidTransform.from_rotvec([0.0, 0.0, 0.0], [0.0, 0.0, 0.4])


@pytest.fixture
def sample_manifest_entry(small_camera):
    """Manifest record of one scene with an identity object pose"""
    return ManifestEntry(
        scene_id="cuboid-t42-0000",
        object_id="primitive:cuboid",
        hand_id="t42",
        depth_path="scenes/cuboid-t42-0000_depth.f32",
        depth_pgm_path="scenes/cuboid-t42-0000_depth.pgm",
        segmentation_path="scenes/cuboid-t42-0000_seg.pgm",
        object_pose=pose_to_row_major(RigidTransform.from_translation([0.0, 0.0, 0.45])),
        wrist_pose=pose_to_row_major(RigidTransform.from_translation([0.0, 0.0, 0.4])),
        camera_pose=pose_to_row_major(RigidTransform.from_translation([0.0, 0.0, -0.4])),
        joint_angles=[[0.1, 0.2], [0.3, 0.4]],
        intrinsics=small_camera,
        seed=11,
        finger_contacts=[True, False]
    )


@pytest.fixture
def sample_scene_results():
    """Three scene records: one hit, one miss, one pipeline failure"""
    identity = pose_to_row_major(RigidTransform.identity())
    times = {stage: 0.1 for stage in PipelineStage}
    return [
        SceneResult(scene_id="a", estimated_pose=identity, ground_truth_pose=identity, adi_error=0.001,
                    lcp=0.9, render_score=1.5, stage_times=times, total_time=0.5),
        SceneResult(scene_id="b", estimated_pose=identity, ground_truth_pose=identity, adi_error=0.012,
                    lcp=0.4, render_score=7.0, stage_times=times, total_time=0.5),
        SceneResult(scene_id="c", ground_truth_pose=identity, adi_error=math.inf, error="no object points",
                    stage_times={stage: 0.0 for stage in PipelineStage}, total_time=0.2),
    ]
