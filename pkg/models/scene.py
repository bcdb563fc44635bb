"""Synthetic scene descriptions and dataset manifest records"""
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .camera import CameraIntrinsics
from .geometry import RigidTransform
from .hand import FingerConfig, HandState
from .params import NoiseModel


def pose_to_row_major(pose: RigidTransform) -> List[float]:
    """4x4 homogeneous matrix flattened row-major"""
    return [float(value) for value in pose.as_matrix().reshape(-1)]


def pose_from_row_major(values: List[float]) -> RigidTransform:
    return RigidTransform.from_matrix(np.asarray(values, dtype=float).reshape(4, 4), project=True)


class SceneSpec(BaseModel):
    """Everything needed to render one ground-truthed grasp scene

    Poses are expressed in the camera frame except `camera_pose`, which places
    the camera in the wrist frame of the hand.
    """

    scene_id: str
    object_id: str = Field(..., description="primitive:<name> or a mesh path")
    hand_id: str = Field(..., description="bundled hand name or a hand kinematics file path")
    camera_pose: RigidTransform = Field(..., description="camera -> wrist frame")
    intrinsics: CameraIntrinsics
    object_pose: RigidTransform = Field(..., description="object -> camera frame")
    hand_state: HandState
    noise: NoiseModel = NoiseModel()
    seed: int = 0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class ManifestEntry(BaseModel):
    """One line of a dataset manifest: file paths plus the ground truth record"""

    scene_id: str
    object_id: str
    hand_id: str
    depth_path: str
    depth_pgm_path: str
    segmentation_path: str
    object_pose: List[float] = Field(..., description="object -> camera, 4x4 row-major")
    wrist_pose: List[float] = Field(..., description="wrist -> camera (T_C^H), 4x4 row-major")
    camera_pose: List[float] = Field(..., description="camera -> wrist frame, 4x4 row-major")
    joint_angles: List[List[float]] = Field(..., description="radians, one list per finger")
    intrinsics: CameraIntrinsics
    seed: int
    finger_contacts: List[bool] = Field(default_factory=list)

    model_config = ConfigDict(extra="forbid")

    @field_validator("object_pose", "wrist_pose", "camera_pose")
    @classmethod
    def validate_matrix(cls, values: List[float]) -> List[float]:
        """Validate 16 row-major entries"""
        if len(values) != 16:
            raise ValueError("Poses must have 16 row-major entries")
        return values

    @classmethod
    def from_spec(cls, spec: SceneSpec, depth_path: str, depth_pgm_path: str, segmentation_path: str,
                  finger_contacts: List[bool]) -> "ManifestEntry":
        return cls(
            scene_id=spec.scene_id,
            object_id=spec.object_id,
            hand_id=spec.hand_id,
            depth_path=depth_path,
            depth_pgm_path=depth_pgm_path,
            segmentation_path=segmentation_path,
            object_pose=pose_to_row_major(spec.object_pose),
            wrist_pose=pose_to_row_major(spec.hand_state.wrist_pose),
            camera_pose=pose_to_row_major(spec.camera_pose),
            joint_angles=[[float(a) for a in config.angles] for config in spec.hand_state.finger_configs],
            intrinsics=spec.intrinsics,
            seed=spec.seed,
            finger_contacts=finger_contacts
        )

    def object_transform(self) -> RigidTransform:
        return pose_from_row_major(self.object_pose)

    def wrist_transform(self) -> RigidTransform:
        return pose_from_row_major(self.wrist_pose)

    def hand_state(self) -> HandState:
        return HandState(
            wrist_pose=self.wrist_transform(),
            finger_configs=[FingerConfig(angles=angles) for angles in self.joint_angles]
        )
