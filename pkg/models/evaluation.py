"""Benchmark results"""
import math
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from .enums import AblationVariant, PipelineStage


class SceneResult(BaseModel):
    """Outcome of running the pipeline on one scene"""

    scene_id: str
    estimated_pose: Optional[List[float]] = Field(None, description="4x4 row-major, None when the pipeline failed")
    ground_truth_pose: List[float]
    adi_error: float = Field(math.inf, description="meters; inf for failures")
    lcp: Optional[float] = None
    render_score: Optional[float] = None
    error: Optional[str] = None
    stage_times: Dict[PipelineStage, float] = Field(default_factory=dict, description="seconds")
    total_time: float = 0.0

    @property
    def failed(self) -> bool:
        return self.estimated_pose is None


class RecallPoint(BaseModel):
    epsilon_m: float
    recall: float = Field(..., ge=0, le=1)


class EvalResult(BaseModel):
    """Per-scene records with aggregate recall and the recall curve"""

    variant: AblationVariant = AblationVariant.FULL
    epsilon: float
    scenes: List[SceneResult]
    recall: float = Field(..., ge=0, le=1)
    curve: List[RecallPoint] = Field(default_factory=list)


class StageTiming(BaseModel):
    stage: PipelineStage
    mean: float = Field(..., ge=0)
    median: float = Field(..., ge=0)


class TimingReport(BaseModel):
    stages: List[StageTiming]
    total_mean: float = Field(..., ge=0)

    @field_validator("stages")
    @classmethod
    def validate_schema(cls, stages: List[StageTiming]) -> List[StageTiming]:
        """Validate the fixed five-stage schema in order"""
        if [timing.stage for timing in stages] != list(PipelineStage):
            raise ValueError("Timing report must list the five pipeline stages in order")
        return stages


class AblationRow(BaseModel):
    variant: AblationVariant
    recall: float = Field(..., ge=0, le=1)
    scenes: int = Field(..., ge=0)
