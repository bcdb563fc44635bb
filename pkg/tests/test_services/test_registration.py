"""Tests for base sampling, congruent sets and hypothesis generation"""
import itertools
import math

import numpy as np
import pytest

from exceptions import DegeneratePairError, NoValidBasesError
from models.geometry import OrientedPointCloud, RigidTransform
from models.params import RegistrationParams
from services.geometry import adi_error, sample_surface, transform_cloud
from services.hand_model import mesh_sdf
from services.registration import (
    ModelPairs,
    align_base,
    build_ppf_hashmap,
    compute_ppf,
    congruence_errors,
    find_congruent_sets,
    generate_hypotheses,
    init_heuristic,
    order_base,
    ppf_counts,
    ppf_features,
    sample_bases,
    uniform_heuristic,
)


@pytest.fixture(scope="module")
def cuboid_samples(cuboid_mesh):
    return sample_surface(cuboid_mesh, 300, seed=1)


@pytest.fixture(scope="module")
def cuboid_hashmap(cuboid_samples):
    return build_ppf_hashmap(cuboid_samples)


@pytest.fixture
def planar_cloud():
    """Points on the plane z = 0.4 whose first four form a well-spread quad"""
    rng = np.random.default_rng(4)
    quad = np.array([[0.0, 0.0], [0.04, 0.03], [0.035, -0.002], [0.004, 0.036]])
    others = rng.uniform(-0.05, 0.05, size=(60, 2))
    xy = np.concatenate([quad, others])
    positions = np.column_stack([xy, np.full(len(xy), 0.4)])
    return OrientedPointCloud(positions=positions, normals=np.tile([0.0, 0.0, -1.0], (len(xy), 1)))


class TestPointPairFeatures:
    """Tests for PPF computation and the model hash map"""

    def test_feature_values(self):
        """Test the four components for perpendicular normals"""
        ppf = compute_ppf([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.1, 0.0, 0.0], [1.0, 0.0, 0.0])
        assert ppf.distance == pytest.approx(0.1)
        assert ppf.angle_n1_d == pytest.approx(math.pi / 2)
        assert ppf.angle_n2_d == pytest.approx(0.0)
        assert ppf.angle_n1_n2 == pytest.approx(math.pi / 2)

    def test_coincident_points_raise_error(self):
        """Test that a pair at one position has no feature"""
        with pytest.raises(DegeneratePairError):
            compute_ppf([0.1, 0.2, 0.3], [0.0, 0.0, 1.0], [0.1, 0.2, 0.3], [1.0, 0.0, 0.0])

    def test_hash_map_counts_every_ordered_pair(self, cuboid_samples, cuboid_hashmap):
        """Test that stored counts sum to n(n − 1)"""
        n = len(cuboid_samples)
        assert cuboid_hashmap.total_count == n * (n - 1)

    def test_model_pairs_are_present(self, cuboid_samples, cuboid_hashmap):
        """Test that every feature of a model pair hits a nonzero bucket"""
        rng = np.random.default_rng(0)
        i = rng.integers(0, len(cuboid_samples), 200)
        j = (i + rng.integers(1, len(cuboid_samples), 200)) % len(cuboid_samples)
        p, n = cuboid_samples.positions, cuboid_samples.normals
        assert np.all(ppf_counts(cuboid_hashmap, ppf_features(p[i], n[i], p[j], n[j])) > 0)

    def test_unseen_distance_is_absent(self, cuboid_hashmap):
        """Test that a pair longer than the object has count zero"""
        features = ppf_features(np.zeros(3), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]),
                                np.array([0.0, 0.0, 1.0]))
        assert ppf_counts(cuboid_hashmap, features)[0] == 0


class TestHeuristic:
    """Tests for the hand-distance sampling heuristic"""

    @pytest.fixture(scope="class")
    def cube_sdf(self, cube_mesh):
        return mesh_sdf([cube_mesh], *cube_mesh.bounds(), voxel_size=0.002)

    def test_weights_grow_away_from_hand(self, cube_sdf):
        """Test that a point farther from the hand surface is more likely"""
        cloud = OrientedPointCloud(positions=[[0.021, 0.0, 0.0], [0.04, 0.0, 0.0]], normals=[[1.0, 0.0, 0.0]] * 2)
        heuristic = init_heuristic(cloud, cube_sdf)
        assert heuristic.weights[1] > heuristic.weights[0]
        assert heuristic.weights.sum() == pytest.approx(1.0)

    def test_all_inside_falls_back_to_uniform(self, cube_sdf):
        """Test the uniform fallback when every weight is zero"""
        cloud = OrientedPointCloud(positions=[[0.0, 0.0, 0.0], [0.005, 0.0, 0.0]], normals=[[1.0, 0.0, 0.0]] * 2)
        assert np.allclose(init_heuristic(cloud, cube_sdf).weights, [0.5, 0.5])

    def test_sampling_decays_weights(self, cuboid_samples, cuboid_hashmap):
        """Test that drawn points keep their discounted weight after sampling"""
        cloud = transform_cloud(RigidTransform.from_translation([0.0, 0.0, 0.4]), cuboid_samples)
        heuristic = uniform_heuristic(cloud)
        sample_bases(cloud, heuristic, cuboid_hashmap, RegistrationParams(n_bases=2))
        assert heuristic.weights.min() < heuristic.weights.max()

    def test_off_plane_fourth_point_is_rejected(self):
        """Test that draws from a volume are mostly rejected as noncoplanar"""
        rng = np.random.default_rng(6)
        positions = rng.uniform(-0.03, 0.03, size=(80, 3)) + [0.0, 0.0, 0.4]
        normals = rng.normal(size=(80, 3))
        cloud = OrientedPointCloud(positions=positions, normals=normals / np.linalg.norm(normals, axis=1, keepdims=True))
        params = RegistrationParams(n_bases=50, rejection_budget_factor=1, min_spread_fraction=0.0)
        bases, rejections = sample_bases(cloud, uniform_heuristic(cloud), build_ppf_hashmap(cloud), params)
        assert rejections["noncoplanar"] > len(bases)
        assert sum(rejections.values()) + len(bases) == 50

    def test_narrow_quad_is_rejected(self, planar_cloud):
        """Test that a spread threshold above any pairwise distance rejects every draw"""
        params = RegistrationParams(n_bases=1, rejection_budget_factor=10, min_spread_fraction=0.9)
        bases, rejections = sample_bases(planar_cloud, uniform_heuristic(planar_cloud),
                                         build_ppf_hashmap(planar_cloud), params)
        assert bases == []
        assert rejections["narrow"] + rejections.get("duplicate", 0) == 10


class TestCongruentSets:
    """Tests for base ordering, congruent set search and alignment"""

    def test_order_base_pairs_crossing_diagonals(self, planar_cloud):
        """Test that the chosen diagonals cross inside both segments"""
        order = order_base(planar_cloud.positions[:4])
        assert order is not None
        assert {frozenset(order[:2]), frozenset(order[2:])} == {frozenset((0, 1)), frozenset((2, 3))}

    def test_source_quad_is_congruent_to_itself(self, planar_cloud):
        """Test that the base's own model indices are found"""
        order = list(order_base(planar_cloud.positions[:4]))
        quads = find_congruent_sets(planar_cloud.positions[order], ModelPairs(planar_cloud), RegistrationParams(),
                                    planar_cloud.normals[order])
        assert any(np.array_equal(quad, order) for quad in quads)

    def test_grid_matches_brute_force(self):
        """Test the retrieved quads against enumerating every ordered 4-tuple of a 4x4 grid"""
        xy = np.array([[x, y] for x in range(4) for y in range(4)], dtype=float) * 0.01
        positions = np.column_stack([xy, np.full(16, 0.5)])
        grid = OrientedPointCloud(positions=positions, normals=np.tile([0.0, 0.0, -1.0], (16, 1)))
        params = RegistrationParams(congruence_distance_tol=0.0005, max_congruent_per_base=10_000)
        base = [0, 10, 8, 2]
        base_points = positions[list(np.array(base)[list(order_base(positions[base]))])]

        found = {tuple(quad) for quad in find_congruent_sets(base_points, ModelPairs(grid), params).tolist()}
        candidates = np.array(list(itertools.permutations(range(16), 4)))
        errors = congruence_errors(base_points, positions[candidates], params)
        expected = {tuple(quad) for quad in candidates[np.isfinite(errors)].tolist()}
        assert expected
        assert found == expected

    def test_sphere_matches_brute_force(self):
        """Test the retrieved quads against pairing every diagonal of a 100-point sphere sampling"""
        radius = 0.05
        k = np.arange(87) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / 87)
        theta = math.pi * (1.0 + math.sqrt(5.0)) * k
        spiral = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
        # squares on three great circles, plus one sample next to an equator corner
        h = 1.0 / math.sqrt(2.0)
        squares = np.array([[h, h, 0], [-h, h, 0], [-h, -h, 0], [h, -h, 0],
                            [h, 0, h], [-h, 0, h], [-h, 0, -h], [h, 0, -h],
                            [0, h, h], [0, -h, h], [0, -h, -h], [0, h, -h]])
        tol = 1e-4
        angle = math.pi / 4 + 0.3 * tol / radius
        near_corner = np.array([[math.cos(angle), math.sin(angle), 0.0]])
        directions = np.concatenate([spiral, squares, near_corner])
        positions = radius * directions
        sphere = OrientedPointCloud(positions=positions, normals=directions)
        params = RegistrationParams(congruence_distance_tol=tol)
        base = [87, 88, 89, 90]
        base_points = positions[list(np.array(base)[list(order_base(positions[base]))])]

        found = {tuple(quad) for quad in find_congruent_sets(base_points, ModelPairs(sphere), params).tolist()}

        lengths = np.linalg.norm(positions[:, None] - positions[None], axis=2)
        first = np.argwhere(np.abs(lengths - np.linalg.norm(base_points[1] - base_points[0])) <= tol)
        second = np.argwhere(np.abs(lengths - np.linalg.norm(base_points[3] - base_points[2])) <= tol)
        candidates = np.array([[a, b, c, d] for a, b in first for c, d in second if len({a, b, c, d}) == 4])
        errors = congruence_errors(base_points, positions[candidates], params)
        expected = {tuple(quad) for quad in candidates[np.isfinite(errors)].tolist()}
        assert len(expected) > 8
        assert any(quad[3] == 99 for quad in expected)
        assert found == expected

    def test_results_are_capped(self, planar_cloud):
        """Test that at most max_congruent_per_base quads come back"""
        order = list(order_base(planar_cloud.positions[:4]))
        params = RegistrationParams(max_congruent_per_base=1, congruence_distance_tol=0.02, congruence_ratio_tol=0.5)
        quads = find_congruent_sets(planar_cloud.positions[order], ModelPairs(planar_cloud), params)
        assert len(quads) <= 1

    def test_align_base_recovers_transform(self, planar_cloud, make_pose):
        """Test closed-form alignment of a moved quad"""
        truth = make_pose(np.random.default_rng(5))
        model = planar_cloud.positions[:4]
        fitted = align_base(truth.apply(model), model)
        assert np.allclose(fitted.as_matrix(), truth.as_matrix(), atol=1e-9)


class TestGenerateHypotheses:
    """Tests for end-to-end hypothesis generation"""

    def test_exact_overlap_yields_true_pose(self, cuboid_samples, cuboid_hashmap):
        """Test that the best-LCP hypothesis of a fully visible object is within 2 mm ADI"""
        truth = RigidTransform.from_rotvec([0.3, -0.4, 0.2], [0.01, -0.02, 0.45])
        cloud = transform_cloud(truth, cuboid_samples)
        params = RegistrationParams(n_bases=5, rng_seed=3, rejection_budget_factor=400)
        batch = generate_hypotheses(cloud, ModelPairs(cuboid_samples), cuboid_hashmap, uniform_heuristic(cloud), params)
        assert len(batch.bases) == 5
        best = max(batch.hypotheses, key=lambda hypothesis: hypothesis.lcp)
        assert adi_error(best.transform, truth, cuboid_samples.positions) < 0.002

    def test_zero_bases_gives_empty_batch(self, cuboid_samples, cuboid_hashmap):
        """Test that n_bases = 0 produces no hypotheses"""
        batch = generate_hypotheses(cuboid_samples, ModelPairs(cuboid_samples), cuboid_hashmap,
                                    uniform_heuristic(cuboid_samples), RegistrationParams(n_bases=0))
        assert batch.hypotheses == []
        assert batch.bases == []

    def test_unmatched_cloud_raises_error(self, cuboid_samples, cuboid_hashmap):
        """Test that a cloud ten times the object size exhausts the budget"""
        scaled = OrientedPointCloud(positions=cuboid_samples.positions * 10.0, normals=cuboid_samples.normals)
        params = RegistrationParams(n_bases=2, rejection_budget_factor=5)
        with pytest.raises(NoValidBasesError) as exc_info:
            generate_hypotheses(scaled, ModelPairs(cuboid_samples), cuboid_hashmap, uniform_heuristic(scaled), params)
        assert sum(exc_info.value.rejections.values()) == 10

    def test_same_seed_same_hypotheses(self, cuboid_samples, cuboid_hashmap):
        """Test that hypotheses are reproducible and independent of the worker count"""
        cloud = transform_cloud(RigidTransform.from_translation([0.0, 0.0, 0.4]), cuboid_samples)
        pairs = ModelPairs(cuboid_samples)
        params = RegistrationParams(n_bases=3, rng_seed=8, rejection_budget_factor=400)
        first = generate_hypotheses(cloud, pairs, cuboid_hashmap, uniform_heuristic(cloud), params, workers=1)
        second = generate_hypotheses(cloud, pairs, cuboid_hashmap, uniform_heuristic(cloud), params, workers=3)
        assert [base.indices for base in first.bases] == [base.indices for base in second.bases]
        assert [h.lcp for h in first.hypotheses] == [h.lcp for h in second.hypotheses]
