"""Enums shared across the pose estimation pipeline"""
from enum import Enum


class ErrorCategory(str, Enum):
    """Machine-parseable error categories reported by the command line"""
    INPUT = "input_error"
    PIPELINE = "pipeline_error"
    INTERNAL = "internal_error"


class AblationVariant(str, Enum):
    """Pipeline variants compared by the ablation harness, in incremental order"""
    BASELINE = "baseline"
    HS = "hs"
    HS_HEURISTIC = "hs_heuristic"
    HS_HEURISTIC_ICP = "hs_heuristic_icp"
    FULL = "full"

    @property
    def uses_hand_segmentation(self) -> bool:
        return self is not AblationVariant.BASELINE

    @property
    def uses_heuristic(self) -> bool:
        return self in (AblationVariant.HS_HEURISTIC, AblationVariant.HS_HEURISTIC_ICP, AblationVariant.FULL)

    @property
    def uses_icp(self) -> bool:
        return self in (AblationVariant.HS_HEURISTIC_ICP, AblationVariant.FULL)

    @property
    def uses_scene_reasoning(self) -> bool:
        return self is AblationVariant.FULL


class PipelineStage(str, Enum):
    """Fixed five-stage timing schema"""
    HAND_ESTIMATION = "hand_estimation"
    HYPOTHESIS_GENERATION = "hypothesis_generation"
    CLUSTERING_ICP = "clustering_icp"
    PRUNING_RENDER = "pruning_render"
    MISC = "misc"


class SegmentationLabel(int, Enum):
    """Per-pixel labels of synthetic segmentation images"""
    BACKGROUND = 0
    HAND = 1
    OBJECT = 2


class Primitive(str, Enum):
    """Procedurally generated object meshes"""
    CYLINDER = "cylinder"
    ELLIPSOID = "ellipsoid"
    CUBOID = "cuboid"
