"""Tests for the pipeline's object point guard"""
import math

import numpy as np
import pytest

from exceptions import TooFewObjectPointsError
from models.enums import AblationVariant
from models.geometry import OrientedPointCloud
from models.hand import FingerConfig, HandState
from services.evaluation import evaluate
from services.pipeline import PoseEstimationPipeline

CORNERS = np.array([[x, y, z] for x in (-0.02, 0.02) for y in (-0.02, 0.02) for z in (-0.02, 0.02)])


@pytest.fixture
def three_points():
    """Object cloud too small to hold a base"""
    return OrientedPointCloud(positions=[[0.0, 0.0, 0.4], [0.01, 0.0, 0.4], [0.0, 0.01, 0.4]],
                              normals=[[0.0, 0.0, -1.0]] * 3)


class TestObjectPointGuard:
    """Tests for scenes that leave fewer than four object points"""

    def test_small_roi_in_baseline(self, mocker, t42_hand, wrist_in_view, three_points):
        """Test that the baseline stops before registration on a three-point ROI"""
        mocker.patch.object(PoseEstimationPipeline, "scene_cloud", return_value=three_points)
        mocker.patch("services.pipeline.extract_roi", return_value=three_points)
        generate = mocker.patch("services.pipeline.generate_hypotheses")
        pipeline = PoseEstimationPipeline(t42_hand, variant=AblationVariant.BASELINE)

        with pytest.raises(TooFewObjectPointsError) as exc_info:
            pipeline.run(mocker.Mock(), mocker.Mock(), wrist_in_view, mocker.Mock())

        assert str(exc_info.value) == "too few object points (3)"
        assert exc_info.value.exit_code == 3
        generate.assert_not_called()

    def test_small_segmentation_in_full_pipeline(self, mocker, t42_hand, wrist_in_view, three_points):
        """Test that segmentation leaving three points is a pipeline error"""
        mocker.patch("services.pipeline.LinkSdfSet")
        mocker.patch.object(PoseEstimationPipeline, "scene_cloud", return_value=three_points)
        state = HandState(wrist_pose=wrist_in_view, finger_configs=[FingerConfig(angles=[0.0, 0.0])] * 2)
        mocker.patch("services.pipeline.estimate_hand", return_value=mocker.Mock(state=state, roi_cloud=three_points))
        mocker.patch("services.pipeline.compute_sdf")
        mocker.patch("services.pipeline.segment_object_cloud", return_value=three_points)
        pipeline = PoseEstimationPipeline(t42_hand)

        with pytest.raises(TooFewObjectPointsError):
            pipeline.run(mocker.Mock(), mocker.Mock(), wrist_in_view, mocker.Mock())

    def test_evaluation_records_a_miss(self, mocker, t42_hand, three_points, sample_manifest_entry):
        """Test that the scene becomes a failed result instead of ending the run"""
        mocker.patch("services.evaluation.load_hand_model", return_value=t42_hand)
        object_model = mocker.patch("services.evaluation.ObjectModel")
        object_model.load.return_value = mocker.Mock(adi_points=CORNERS)
        mocker.patch.object(PoseEstimationPipeline, "scene_cloud", return_value=three_points)
        mocker.patch("services.pipeline.extract_roi", return_value=three_points)
        store = mocker.Mock()
        store.load_depth.return_value = (mocker.Mock(), mocker.Mock())

        result = evaluate([sample_manifest_entry], store, variant=AblationVariant.BASELINE)

        scene = result.scenes[0]
        assert scene.failed
        assert scene.adi_error == math.inf
        assert scene.error == "too few object points (3)"
        assert result.recall == 0.0
