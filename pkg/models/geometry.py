"""Geometric value types: rigid transforms, oriented point clouds and triangle meshes"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.transform import Rotation

ORTHONORMAL_TOLERANCE = 1e-9
UNIT_NORMAL_TOLERANCE = 1e-6


def _frozen_array(value, dtype=np.float64) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class RigidTransform(BaseModel):
    """Element of SE(3): p -> R p + t, translation in meters"""

    rotation: np.ndarray = Field(default_factory=lambda: np.eye(3), description="3x3 rotation matrix")
    translation: np.ndarray = Field(default_factory=lambda: np.zeros(3), description="translation, meters")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("rotation", mode="before")
    @classmethod
    def validate_rotation(cls, rotation) -> np.ndarray:
        """Validate that rotation is orthonormal with determinant +1"""
        rotation = _frozen_array(rotation)
        if rotation.shape != (3, 3) or not np.all(np.isfinite(rotation)):
            raise ValueError("Rotation must be a finite 3x3 matrix")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > ORTHONORMAL_TOLERANCE:
            raise ValueError("Rotation must be orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise ValueError("Rotation determinant must be 1")
        return rotation

    @field_validator("translation", mode="before")
    @classmethod
    def validate_translation(cls, translation) -> np.ndarray:
        """Validate that translation is a finite 3-vector"""
        translation = _frozen_array(translation).reshape(-1)
        if translation.shape != (3,) or not np.all(np.isfinite(translation)):
            raise ValueError("Translation must be a finite 3-vector")
        return translation

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, translation) -> "RigidTransform":
        return cls(translation=translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Build from an axis-angle vector (radians) and a translation"""
        return cls(rotation=Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix(), translation=translation)

    @classmethod
    def from_matrix(cls, matrix, project: bool = False) -> "RigidTransform":
        """Build from a 4x4 homogeneous matrix

        Args:
            matrix: 4x4 array-like, row-major
            project: project the rotation block onto SO(3) first (for matrices read
                from text with limited precision)
        """
        matrix = np.asarray(matrix, dtype=float).reshape(4, 4)
        rotation = matrix[:3, :3]
        if project:
            u, _, vt = np.linalg.svd(rotation)
            rotation = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
        return cls(rotation=rotation, translation=matrix[:3, 3])

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self ∘ other (other is applied first)"""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rotation_t = self.rotation.T
        return RigidTransform(rotation=rotation_t, translation=-rotation_t @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 3) or (3,) array of positions"""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def apply_normals(self, normals: np.ndarray) -> np.ndarray:
        """Rotate an (N, 3) or (3,) array of directions"""
        return np.asarray(normals, dtype=float) @ self.rotation.T

    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.rotation).as_rotvec()


class OrientedPointCloud(BaseModel):
    """Ordered points with unit normals, optionally linked to depth-image pixels"""

    positions: np.ndarray = Field(..., description="(N, 3) positions, meters")
    normals: np.ndarray = Field(..., description="(N, 3) unit normals")
    pixels: Optional[np.ndarray] = Field(None, description="(N, 2) source pixel (row, col)")
    valid_normals: Optional[np.ndarray] = Field(None, description="(N,) False where the normal fit was degenerate")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("positions", mode="before")
    @classmethod
    def validate_positions(cls, positions) -> np.ndarray:
        """Validate that positions are a finite (N, 3) array"""
        positions = _frozen_array(positions).reshape(-1, 3)
        if not np.all(np.isfinite(positions)):
            raise ValueError("Point positions must be finite")
        return positions

    @field_validator("normals", mode="before")
    @classmethod
    def validate_normals(cls, normals) -> np.ndarray:
        """Validate that every normal has unit length"""
        normals = _frozen_array(normals).reshape(-1, 3)
        if len(normals) and np.abs(np.linalg.norm(normals, axis=1) - 1.0).max() > UNIT_NORMAL_TOLERANCE:
            raise ValueError("Normals must have unit length")
        return normals

    @field_validator("pixels", mode="before")
    @classmethod
    def validate_pixels(cls, pixels) -> Optional[np.ndarray]:
        """Validate that pixel indices are unique (row, col) pairs"""
        if pixels is None:
            return None
        pixels = _frozen_array(pixels, dtype=np.int64).reshape(-1, 2)
        if len(np.unique(pixels, axis=0)) != len(pixels):
            raise ValueError("Pixel indices must be unique")
        return pixels

    @field_validator("valid_normals", mode="before")
    @classmethod
    def validate_valid_normals(cls, valid_normals) -> Optional[np.ndarray]:
        if valid_normals is None:
            return None
        return _frozen_array(valid_normals, dtype=bool).reshape(-1)

    @model_validator(mode="after")
    def validate_lengths(self) -> "OrientedPointCloud":
        """Validate that all per-point arrays have the same length"""
        count = len(self.positions)
        if len(self.normals) != count:
            raise ValueError("Positions and normals must have the same length")
        if self.pixels is not None and len(self.pixels) != count:
            raise ValueError("Pixel indices must match the number of points")
        if self.valid_normals is not None and len(self.valid_normals) != count:
            raise ValueError("Normal validity flags must match the number of points")
        return self

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def normal_mask(self) -> np.ndarray:
        if self.valid_normals is None:
            return np.ones(len(self), dtype=bool)
        return self.valid_normals

    def subset(self, selector) -> "OrientedPointCloud":
        """Return the points picked by a boolean mask or index array, order preserved"""
        return OrientedPointCloud(
            positions=self.positions[selector],
            normals=self.normals[selector],
            pixels=None if self.pixels is None else self.pixels[selector],
            valid_normals=None if self.valid_normals is None else self.valid_normals[selector]
        )


class TriangleMesh(BaseModel):
    """Triangle soup in meters, without zero-area triangles"""

    vertices: np.ndarray = Field(..., description="(V, 3) vertex positions, meters")
    triangles: np.ndarray = Field(..., description="(F, 3) vertex indices")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("vertices", mode="before")
    @classmethod
    def validate_vertices(cls, vertices) -> np.ndarray:
        vertices = _frozen_array(vertices).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValueError("Mesh vertices must be finite")
        return vertices

    @field_validator("triangles", mode="before")
    @classmethod
    def validate_triangles(cls, triangles) -> np.ndarray:
        return _frozen_array(triangles, dtype=np.int64).reshape(-1, 3)

    @model_validator(mode="after")
    def validate_topology(self) -> "TriangleMesh":
        """Validate that indices are in range and no triangle is degenerate"""
        if len(self.triangles) == 0:
            raise ValueError("Mesh must contain at least one triangle")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise ValueError("Triangle indices out of range")
        if np.any(self.triangle_areas() <= 0.0):
            raise ValueError("Mesh contains degenerate triangles")
        return self

    def corners(self) -> np.ndarray:
        """(F, 3, 3) triangle corner positions"""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        corners = self.vertices[self.triangles]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def transformed(self, transform: RigidTransform) -> "TriangleMesh":
        return TriangleMesh(vertices=transform.apply(self.vertices), triangles=self.triangles)

    def bounds(self) -> np.ndarray:
        """(2, 3) axis-aligned lower and upper corners"""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])
