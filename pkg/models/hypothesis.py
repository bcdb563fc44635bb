"""Registration features and object pose hypotheses"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .geometry import RigidTransform, _frozen_array


class Ppf(BaseModel):
    """Point pair feature (‖d‖, ∠(n1, d), ∠(n2, d), ∠(n1, n2))"""

    distance: float = Field(..., ge=0, description="meters")
    angle_n1_d: float = Field(..., ge=0, le=np.pi)
    angle_n2_d: float = Field(..., ge=0, le=np.pi)
    angle_n1_n2: float = Field(..., ge=0, le=np.pi)

    model_config = ConfigDict(frozen=True)

    def as_array(self) -> np.ndarray:
        return np.array([self.distance, self.angle_n1_d, self.angle_n2_d, self.angle_n1_n2])


class PpfHashMap(BaseModel):
    """Occurrence counts of discretized point pair features over a model sampling"""

    distance_step: float = Field(..., gt=0)
    angle_step: float = Field(..., gt=0)
    keys: np.ndarray = Field(..., description="sorted packed feature keys")
    counts: np.ndarray = Field(..., description="occurrences per key, all >= 1")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("keys", mode="before")
    @classmethod
    def validate_keys(cls, keys) -> np.ndarray:
        keys = _frozen_array(keys, dtype=np.int64).reshape(-1)
        if len(keys) > 1 and np.any(np.diff(keys) <= 0):
            raise ValueError("Hash map keys must be strictly increasing")
        return keys

    @field_validator("counts", mode="before")
    @classmethod
    def validate_counts(cls, counts) -> np.ndarray:
        counts = _frozen_array(counts, dtype=np.int64).reshape(-1)
        if np.any(counts < 1):
            raise ValueError("Stored keys must have a count of at least 1")
        return counts

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())


class SamplingHeuristic(BaseModel):
    """Per-point sampling weights over the object cloud; decayed in place as points are drawn"""

    weights: np.ndarray = Field(..., description="normalized per-point probabilities")
    rate: float = Field(..., gt=0, description="λ, 1/meters")
    decay: float = Field(0.5, gt=0, le=1, description="γ")

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("weights", mode="before")
    @classmethod
    def validate_weights(cls, weights) -> np.ndarray:
        """Validate a probability distribution"""
        weights = np.array(weights, dtype=float).reshape(-1)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("Heuristic weights must be a probability distribution")
        return weights

    def discount(self, index: int) -> None:
        """Multiply a drawn point's weight by γ and renormalize"""
        self.weights[index] *= self.decay
        self.weights /= self.weights.sum()


class Base(BaseModel):
    """Four distinct indices into the object cloud forming a coplanar base"""

    indices: tuple[int, int, int, int]

    model_config = ConfigDict(frozen=True)

    @field_validator("indices")
    @classmethod
    def validate_indices(cls, indices):
        if len(set(indices)) != 4:
            raise ValueError("Base indices must be distinct")
        return indices


class PoseHypothesis(BaseModel):
    """Candidate object pose (model -> camera) with its alignment scores"""

    transform: RigidTransform
    lcp: float = Field(..., ge=0, le=1)
    render_score: Optional[float] = None

    model_config = ConfigDict(frozen=True)
