"""Models package for the in-hand pose estimation engine"""
from .camera import CameraIntrinsics, DepthImage
from .enums import AblationVariant, ErrorCategory, PipelineStage, Primitive, SegmentationLabel
from .geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from .hand import FingerChain, FingerConfig, HandModel, HandState, Joint
from .hypothesis import Base, PoseHypothesis, Ppf, PpfHashMap, SamplingHeuristic
from .params import PipelineConfig
from .sdf import SignedDistanceField

__all__ = [
    "AblationVariant",
    "Base",
    "CameraIntrinsics",
    "DepthImage",
    "ErrorCategory",
    "FingerChain",
    "FingerConfig",
    "HandModel",
    "HandState",
    "Joint",
    "OrientedPointCloud",
    "PipelineConfig",
    "PipelineStage",
    "PoseHypothesis",
    "Ppf",
    "PpfHashMap",
    "Primitive",
    "RigidTransform",
    "SamplingHeuristic",
    "SegmentationLabel",
    "SignedDistanceField",
    "TriangleMesh",
]
