"""Articulated hand model and hand state"""
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import OrientedPointCloud, RigidTransform, TriangleMesh, _frozen_array


class Joint(BaseModel):
    """Revolute joint: origin relative to the parent link, rotation about a unit axis"""

    axis: np.ndarray = Field(..., description="unit rotation axis in the joint frame")
    origin: RigidTransform = Field(default_factory=RigidTransform.identity, description="parent link -> joint frame at θ = 0")
    lower: float = Field(..., description="θ_min, radians")
    upper: float = Field(..., description="θ_max, radians")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("axis", mode="before")
    @classmethod
    def validate_axis(cls, axis) -> np.ndarray:
        """Validate and normalize the joint axis"""
        axis = np.asarray(axis, dtype=float).reshape(-1)
        norm = np.linalg.norm(axis)
        if axis.shape != (3,) or not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("Joint axis must be a nonzero 3-vector")
        return _frozen_array(axis / norm)

    @model_validator(mode="after")
    def validate_limits(self) -> "Joint":
        """Validate that θ_min < θ_max"""
        if not self.lower < self.upper:
            raise ValueError("Joint lower limit must be below the upper limit")
        return self

    @property
    def span(self) -> float:
        return self.upper - self.lower


class FingerChain(BaseModel):
    """Serial chain of revolute joints, one link per joint"""

    name: str
    joints: List[Joint]
    link_meshes: List[TriangleMesh]
    link_point_samples: List[OrientedPointCloud]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def validate_chain(self) -> "FingerChain":
        """Validate one mesh and one sample cloud per joint"""
        if not self.joints:
            raise ValueError("A finger needs at least one joint")
        if len(self.link_meshes) != len(self.joints) or len(self.link_point_samples) != len(self.joints):
            raise ValueError("A finger needs one link mesh and one sample cloud per joint")
        return self

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower_limits(self) -> np.ndarray:
        return np.array([joint.lower for joint in self.joints])

    @property
    def upper_limits(self) -> np.ndarray:
        return np.array([joint.upper for joint in self.joints])


class HandModel(BaseModel):
    """Wrist plus fingers, with the region of interest box in the wrist frame"""

    name: str
    wrist_mesh: TriangleMesh
    wrist_point_samples: OrientedPointCloud
    fingers: List[FingerChain]
    roi_dims: np.ndarray = Field(..., description="ROI box extents in the wrist frame, meters")
    roi_center: np.ndarray = Field(default_factory=lambda: np.zeros(3), description="ROI box center in the wrist frame")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("roi_dims", mode="before")
    @classmethod
    def validate_roi_dims(cls, roi_dims) -> np.ndarray:
        """Validate that ROI extents are positive"""
        roi_dims = _frozen_array(roi_dims).reshape(-1)
        if roi_dims.shape != (3,) or np.any(roi_dims <= 0):
            raise ValueError("ROI dims must be three positive extents")
        return roi_dims

    @field_validator("roi_center", mode="before")
    @classmethod
    def validate_roi_center(cls, roi_center) -> np.ndarray:
        return _frozen_array(roi_center).reshape(3)

    @field_validator("fingers")
    @classmethod
    def validate_fingers(cls, fingers: List[FingerChain]) -> List[FingerChain]:
        if not fingers:
            raise ValueError("A hand needs at least one finger")
        return fingers


class FingerConfig(BaseModel):
    """Joint angles q_F of one finger, radians"""

    angles: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("angles", mode="before")
    @classmethod
    def validate_angles(cls, angles) -> np.ndarray:
        angles = _frozen_array(angles).reshape(-1)
        if not np.all(np.isfinite(angles)):
            raise ValueError("Joint angles must be finite")
        return angles

    @classmethod
    def zeros(cls, finger: FingerChain) -> "FingerConfig":
        return cls(angles=np.zeros(finger.dof))

    def within_limits(self, finger: FingerChain, tolerance: float = 1e-12) -> bool:
        if len(self.angles) != finger.dof:
            return False
        return bool(np.all(self.angles >= finger.lower_limits - tolerance) and np.all(self.angles <= finger.upper_limits + tolerance))


class HandState(BaseModel):
    """Full articulated state x_H: wrist pose T_C^H and one configuration per finger"""

    wrist_pose: RigidTransform
    finger_configs: List[FingerConfig]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def matches(self, model: HandModel) -> bool:
        return len(self.finger_configs) == len(model.fingers)
