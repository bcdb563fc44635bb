"""Voxelized signed distance field"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .geometry import RigidTransform, _frozen_array


class SignedDistanceField(BaseModel):
    """Signed distance samples on a regular grid, negative inside the surface

    Voxel (i, j, k) is centered at origin + (i, j, k) * voxel_size in the grid
    frame; `pose` maps grid-frame coordinates to the frame queries are made in.
    """

    pose: RigidTransform = Field(default_factory=RigidTransform.identity, description="grid frame -> query frame")
    origin: np.ndarray = Field(..., description="center of voxel (0, 0, 0) in the grid frame, meters")
    voxel_size: float = Field(..., gt=0, description="meters")
    values: np.ndarray = Field(..., description="(nx, ny, nz) signed distances, meters")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("origin", mode="before")
    @classmethod
    def validate_origin(cls, origin) -> np.ndarray:
        return _frozen_array(origin).reshape(3)

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, values) -> np.ndarray:
        """Validate a finite 3D grid with positive dims"""
        values = _frozen_array(values)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError("SDF values must be a 3D grid with positive dims")
        if not np.all(np.isfinite(values)):
            raise ValueError("SDF values must be finite")
        return values

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.values.shape)

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    def voxel_centers(self) -> np.ndarray:
        """(nx, ny, nz, 3) voxel centers in the grid frame"""
        axes = [self.origin[a] + self.voxel_size * np.arange(n) for a, n in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
