"""Error types raised by the pose estimation pipeline

Every error carries a machine-parseable category and the process exit code
the command line maps it to.
"""
from typing import Optional

from models.enums import ErrorCategory


class PoseEstimationError(Exception):
    """Base class for all expected pipeline and input failures"""

    category: ErrorCategory = ErrorCategory.INTERNAL
    exit_code: int = 4
    default_message: str = "internal error"

    def __init__(self, message: Optional[str] = None):
        super().__init__(message or self.default_message)


class InputError(PoseEstimationError):
    """Missing or unparseable input"""

    category = ErrorCategory.INPUT
    exit_code = 2
    default_message = "input error"


class DatasetIOError(InputError):
    """Reading or writing a dataset file failed"""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class PipelineError(PoseEstimationError):
    """The estimation pipeline could not produce a result"""

    category = ErrorCategory.PIPELINE
    exit_code = 3
    default_message = "pipeline error"


class EmptyReferenceCloudError(PipelineError):
    default_message = "empty reference cloud"


class DegenerateCorrespondenceError(PipelineError):
    """ICP lost its correspondences; the initial transform is returned on the error"""

    default_message = "degenerate correspondence set"

    def __init__(self, transform, message: Optional[str] = None):
        self.transform = transform
        super().__init__(message)


class JointLimitError(PipelineError):
    default_message = "joint limit violation"


class RoiEmptyError(PipelineError):
    default_message = "ROI empty"


class NoObjectPointsError(PipelineError):
    default_message = "no object points"


class TooFewObjectPointsError(PipelineError):
    """Fewer object points remain than a base needs"""

    default_message = "too few object points"


class DegeneratePairError(PipelineError):
    default_message = "degenerate pair"


class RankDeficientAlignmentError(PipelineError):
    default_message = "rank-deficient alignment"


class NoValidBasesError(PipelineError):
    """Base sampling exhausted its budget without accepting a base"""

    default_message = "no valid bases"

    def __init__(self, rejections: dict):
        self.rejections = dict(rejections)
        details = ", ".join(f"{reason}={count}" for reason, count in sorted(self.rejections.items()))
        super().__init__(f"{self.default_message} ({details})")


class NoHypothesesError(PipelineError):
    default_message = "no hypotheses to select"


class EmptyDepthImageError(PipelineError):
    default_message = "empty depth image"


class PlacementFailedError(PipelineError):
    default_message = "placement failed"
