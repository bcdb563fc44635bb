"""Tests for clustering, refinement, physics pruning and final selection"""
import numpy as np
import pytest

from exceptions import NoHypothesesError
from models.geometry import RigidTransform
from models.hand import FingerConfig, HandState
from models.hypothesis import PoseHypothesis
from models.params import ClusterParams
from services.geometry import sample_surface, transform_cloud
from services.hand_model import mesh_sdf, posed_hand_meshes
from services.render import render_depth
from services.selection import (
    cluster_hypotheses,
    depth_discrepancy,
    physics_prune,
    refine_and_truncate,
    select_final,
    select_max_lcp,
)


def _hypothesis(translation, lcp=0.5, rotvec=(0.0, 0.0, 0.0)) -> PoseHypothesis:
    return PoseHypothesis(transform=RigidTransform.from_rotvec(rotvec, translation), lcp=lcp)


class TestClusterHypotheses:
    """Tests for translation then rotation clustering"""

    def test_far_translations_split(self):
        """Test that hypotheses a meter apart end up in different clusters"""
        clusters = cluster_hypotheses([_hypothesis([0.0, 0.0, 0.5]), _hypothesis([1.0, 0.0, 0.5])])
        assert sorted(clusters) == [[0], [1]]

    def test_identical_poses_merge(self):
        """Test that equal poses share one cluster"""
        assert cluster_hypotheses([_hypothesis([0.0, 0.0, 0.5])] * 3) == [[0, 1, 2]]

    def test_rotation_splits_translation_group(self):
        """Test that a 120 degree rotation separates poses at the same position"""
        hypotheses = [_hypothesis([0.0, 0.0, 0.5]), _hypothesis([0.0, 0.0, 0.5], rotvec=(0.0, 0.0, np.radians(120.0)))]
        assert len(cluster_hypotheses(hypotheses)) == 2

    def test_every_hypothesis_assigned_once(self):
        """Test that the clusters partition the input"""
        rng = np.random.default_rng(0)
        hypotheses = [_hypothesis(rng.uniform(-0.02, 0.02, 3), lcp=float(rng.uniform()), rotvec=rng.normal(size=3))
                      for _ in range(30)]
        clusters = cluster_hypotheses(hypotheses)
        assert sorted(i for cluster in clusters for i in cluster) == list(range(30))

    def test_empty_input(self):
        """Test that nothing to cluster gives no clusters"""
        assert cluster_hypotheses([]) == []


class TestRefineAndTruncate:
    """Tests for representative selection, merging and top-k"""

    def test_duplicates_are_merged(self):
        """Test that two clusters with the same pose collapse to one"""
        hypotheses = [_hypothesis([0.0, 0.0, 0.5], lcp=0.7), _hypothesis([0.0, 0.0, 0.501], lcp=0.6)]
        kept = refine_and_truncate(hypotheses, [[0], [1]], None, None, refine=False)
        assert len(kept) == 1
        assert kept[0].lcp == 0.7

    def test_top_k_keeps_highest_lcp(self):
        """Test truncation to the best-scoring representatives"""
        hypotheses = [_hypothesis([0.1 * i, 0.0, 0.5], lcp=0.1 * i) for i in range(5)]
        kept = refine_and_truncate(hypotheses, [[i] for i in range(5)], None, None, ClusterParams(top_k=2), refine=False)
        assert [h.lcp for h in kept] == pytest.approx([0.4, 0.3])

    def test_cluster_representative_is_best(self):
        """Test that each cluster contributes its highest-LCP member"""
        hypotheses = [_hypothesis([0.0, 0.0, 0.5], lcp=0.2), _hypothesis([0.0, 0.0, 0.5], lcp=0.8)]
        kept = refine_and_truncate(hypotheses, [[0, 1]], None, None, refine=False)
        assert [h.lcp for h in kept] == [0.8]

    def test_refinement_never_lowers_lcp(self, cuboid_mesh):
        """Test that ICP refinement keeps the better of the two poses"""
        samples = sample_surface(cuboid_mesh, 400, seed=2)
        truth = RigidTransform.from_translation([0.0, 0.0, 0.5])
        scene = transform_cloud(truth, samples)
        offset = PoseHypothesis(transform=RigidTransform.from_translation([0.002, 0.0, 0.5]), lcp=0.0)
        kept = refine_and_truncate([offset], [[0]], samples, scene)
        assert kept[0].lcp == pytest.approx(1.0)

    def test_no_clusters_raise_error(self):
        """Test that refinement needs a cluster"""
        with pytest.raises(ValueError):
            refine_and_truncate([], [], None, None)


class TestPhysicsPrune:
    """Tests for contact-based pruning against a cube standing in for the hand"""

    @pytest.fixture(scope="class")
    def cube_sdf(self, cube_mesh):
        return mesh_sdf([cube_mesh], *cube_mesh.bounds(), voxel_size=0.002)

    def test_penetration_separation_and_contact(self, cube_sdf):
        """Test the three outcomes on a one-point object"""
        point = np.zeros((1, 3))
        hypotheses = [_hypothesis([0.0, 0.0, 0.0]), _hypothesis([0.1, 0.0, 0.0]), _hypothesis([0.025, 0.0, 0.0])]
        result = physics_prune(hypotheses, point, cube_sdf)
        assert result.rejected_penetration == 1
        assert result.rejected_separation == 1
        assert len(result.kept) == 1
        assert result.kept[0] is hypotheses[2]

    def test_shallow_contact_is_kept(self, cube_sdf):
        """Test that a point 2 mm inside the surface is within tolerance"""
        result = physics_prune([_hypothesis([0.018, 0.0, 0.0])], np.zeros((1, 3)), cube_sdf)
        assert len(result.kept) == 1


class TestSelectFinal:
    """Tests for render-score filtering and the final LCP pick"""

    @pytest.fixture
    def grasp_scene(self, t42_hand, cube_mesh, small_camera, wrist_in_view):
        state = HandState(wrist_pose=wrist_in_view,
                          finger_configs=[FingerConfig.zeros(finger) for finger in t42_hand.fingers])
        truth = wrist_in_view @ RigidTransform.from_translation([0.0, 0.0, 0.08])
        meshes = posed_hand_meshes(t42_hand, state) + [(cube_mesh, truth)]
        return state, truth, render_depth(meshes, small_camera)

    def test_true_pose_wins_on_render_score(self, grasp_scene, t42_hand, cube_mesh, small_camera):
        """Test that the rendered ground truth beats displaced poses with higher LCP"""
        state, truth, observed = grasp_scene
        hypotheses = [
            PoseHypothesis(transform=RigidTransform.from_translation([0.05, 0.0, 0.0]) @ truth, lcp=0.9),
            PoseHypothesis(transform=truth, lcp=0.6),
            PoseHypothesis(transform=RigidTransform.from_translation([0.0, 0.05, 0.0]) @ truth, lcp=0.8),
        ]
        result = select_final(hypotheses, observed, state, t42_hand, cube_mesh, small_camera)
        assert result.retained == 1
        assert np.allclose(result.best.transform.translation, truth.translation)
        assert result.best.render_score == pytest.approx(0.0)
        assert all(h.render_score is not None for h in result.scored)

    def test_retains_a_third_rounded_up(self, grasp_scene, t42_hand, cube_mesh, small_camera):
        """Test ⌈n/3⌉ retained hypotheses for n = 4"""
        state, truth, observed = grasp_scene
        hypotheses = [PoseHypothesis(transform=RigidTransform.from_translation([0.01 * i, 0.0, 0.0]) @ truth, lcp=0.5)
                      for i in range(4)]
        assert select_final(hypotheses, observed, state, t42_hand, cube_mesh, small_camera).retained == 2

    def test_empty_list_raises_error(self, grasp_scene, t42_hand, cube_mesh, small_camera):
        """Test that selection needs at least one hypothesis"""
        state, _, observed = grasp_scene
        with pytest.raises(NoHypothesesError):
            select_final([], observed, state, t42_hand, cube_mesh, small_camera)


class TestScoring:
    """Tests for the depth discrepancy and max-LCP selection"""

    def test_discrepancy_is_capped_per_pixel(self):
        """Test Σ min(|Δ|, cap) over pixels where either depth is valid"""
        observed = np.array([[0.5, 0.0, 0.0], [0.5, 0.5, 0.0]])
        rendered = np.array([[0.5, 0.6, 0.0], [0.51, 0.0, 0.0]])
        assert depth_discrepancy(observed, rendered, 0.02) == pytest.approx(0.02 + 0.01 + 0.02)

    def test_max_lcp_ties_prefer_smaller_translation(self):
        """Test the deterministic tie rule"""
        hypotheses = [_hypothesis([0.0, 0.0, 0.6], lcp=0.5), _hypothesis([0.0, 0.0, 0.4], lcp=0.5)]
        assert select_max_lcp(hypotheses) is hypotheses[1]

    def test_max_lcp_of_nothing(self):
        """Test that an empty list has no pick"""
        assert select_max_lcp([]) is None
