"""Pinhole camera intrinsics and depth images"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import _frozen_array


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics in pixels; the camera looks down +z"""

    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_principal_point(self) -> "CameraIntrinsics":
        """Validate that the principal point lies inside the image"""
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("Principal point must lie inside the image")
        return self

    @classmethod
    def centered(cls, width: int, height: int, fx: float, fy: float) -> "CameraIntrinsics":
        return cls(fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height)

    def project(self, points: np.ndarray) -> np.ndarray:
        """(N, 3) camera-frame points -> (N, 2) pixel coordinates (u = column, v = row)"""
        points = np.asarray(points, dtype=float)
        z = points[:, 2]
        return np.stack([self.fx * points[:, 0] / z + self.cx, self.fy * points[:, 1] / z + self.cy], axis=1)


class DepthImage(BaseModel):
    """Row-major depth in meters, 0 where there is no return"""

    depth: np.ndarray = Field(..., description="(height, width) meters")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("depth", mode="before")
    @classmethod
    def validate_depth(cls, depth) -> np.ndarray:
        """Validate finite nonnegative depth values"""
        depth = _frozen_array(depth)
        if depth.ndim != 2:
            raise ValueError("Depth image must be two-dimensional")
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise ValueError("Depth values must be finite and nonnegative")
        return depth

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0

    def matches(self, intrinsics: CameraIntrinsics) -> bool:
        return self.width == intrinsics.width and self.height == intrinsics.height
