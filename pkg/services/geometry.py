"""Core geometry: nearest-neighbor index, LCP scoring, rotation metrics, ICP, ADI and normals"""
import logging
from typing import Optional, Tuple, Union

import numpy as np
import trimesh
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from exceptions import DegenerateCorrespondenceError, EmptyReferenceCloudError, RankDeficientAlignmentError
from models.geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from models.params import IcpParams, LcpParams

logger = logging.getLogger(__name__)

# Below this ratio of the smallest to the largest singular value a fit is rank deficient
RANK_TOLERANCE = 1e-9


class SpatialIndex:
    """Immutable exact nearest-neighbor index over a point set"""

    def __init__(self, points: np.ndarray):
        self.points = np.array(points, dtype=float).reshape(-1, 3)
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return self._tree is None

    def query(self, points: np.ndarray, k: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """Exact k-nearest neighbors of each query point

        Raises:
            EmptyReferenceCloudError: the index holds no points
        """
        if self._tree is None:
            raise EmptyReferenceCloudError()
        return self._tree.query(np.asarray(points, dtype=float), k=k, eps=0.0)

    def query_ball_point(self, points: np.ndarray, radius: float):
        if self._tree is None:
            raise EmptyReferenceCloudError()
        return self._tree.query_ball_point(np.asarray(points, dtype=float), radius)

    @property
    def tree(self) -> Optional[cKDTree]:
        return self._tree


def transform_cloud(transform: RigidTransform, cloud: OrientedPointCloud) -> OrientedPointCloud:
    """Map positions by p -> Rp + t and normals by n -> Rn, preserving order and pixel links"""
    return OrientedPointCloud(
        positions=transform.apply(cloud.positions),
        normals=transform.apply_normals(cloud.normals),
        pixels=cloud.pixels,
        valid_normals=cloud.valid_normals
    )


def lcp_inlier_mask(points: np.ndarray, scene_index: SpatialIndex, inlier_distance: float) -> np.ndarray:
    distances, _ = scene_index.query(points)
    return distances < inlier_distance


def lcp_score(model: Union[OrientedPointCloud, np.ndarray], scene_index: SpatialIndex,
              transform: RigidTransform, params: LcpParams = LcpParams()) -> float:
    """Fraction of model points whose transformed position has a scene neighbor closer than δ

    Raises:
        EmptyReferenceCloudError: scene_index is empty
    """
    positions = model.positions if isinstance(model, OrientedPointCloud) else np.asarray(model, dtype=float)
    if len(positions) == 0:
        raise ValueError("LCP needs a nonempty model")
    inliers = lcp_inlier_mask(transform.apply(positions), scene_index, params.inlier_distance)
    return float(np.count_nonzero(inliers)) / len(positions)


def geodesic_rotation_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of R1ᵀR2 in [0, π] radians"""
    cosine = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


def fit_rigid_transform(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto target points

    Closed form via SVD of the cross-covariance; the reflection solution is
    replaced by the closest proper rotation.

    Raises:
        RankDeficientAlignmentError: the points are (nearly) collinear
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    source_centroid = source.mean(axis=0)
    target_centroid = target.mean(axis=0)
    a = source - source_centroid
    b = target - target_centroid

    h = a.T @ b
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] < RANK_TOLERANCE * s[0]:
        raise RankDeficientAlignmentError()

    # special reflection case
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = target_centroid - rotation @ source_centroid
    return RigidTransform(rotation=rotation, translation=translation)


def _icp_correspondences(moved: OrientedPointCloud, scene: OrientedPointCloud, scene_index: SpatialIndex,
                         max_distance: float, max_normal_angle: float) -> Tuple[np.ndarray, np.ndarray]:
    distances, nearest = scene_index.query(moved.positions)
    keep = distances <= max_distance
    cosines = np.einsum("ij,ij->i", moved.normals, scene.normals[nearest])
    keep &= cosines >= np.cos(max_normal_angle)
    keep &= scene.normal_mask[nearest]
    return np.flatnonzero(keep), nearest[keep]


def point_to_plane_residual(points: np.ndarray, targets: np.ndarray, normals: np.ndarray) -> float:
    if len(points) == 0:
        return 0.0
    return float(np.mean(np.einsum("ij,ij->i", points - targets, normals) ** 2))


def point_to_plane_icp(model: OrientedPointCloud, scene: OrientedPointCloud, scene_index: SpatialIndex,
                       initial: RigidTransform, params: IcpParams = IcpParams(),
                       lcp: LcpParams = LcpParams()) -> Tuple[RigidTransform, float]:
    """Refine a model-to-scene transform by linearized point-to-plane ICP

    Each iteration matches every moved model point to its nearest scene point,
    drops pairs farther than rejection_factor·δ or with normals more than
    max_normal_angle apart, and solves the small-angle least-squares problem
    for Σ((T·p − q)·n_q)².

    Returns:
        (refined transform, mean squared point-to-plane residual of the last matches)

    Raises:
        DegenerateCorrespondenceError: fewer than min_correspondences pairs survive;
            the error carries the initial transform
    """
    if len(model) == 0:
        raise ValueError("ICP needs a nonempty model")
    max_distance = params.rejection_factor * lcp.inlier_distance
    transform = initial
    residual = 0.0

    for iteration in range(params.max_iters):
        moved = transform_cloud(transform, model)
        source_idx, target_idx = _icp_correspondences(moved, scene, scene_index, max_distance, params.max_normal_angle)
        if len(source_idx) < params.min_correspondences:
            logger.warning(f"ICP iteration {iteration}: only {len(source_idx)} correspondences")
            raise DegenerateCorrespondenceError(initial)

        p = moved.positions[source_idx]
        q = scene.positions[target_idx]
        n = scene.normals[target_idx]
        residual = point_to_plane_residual(p, q, n)

        a = np.hstack([np.cross(p, n), n])
        b = -np.einsum("ij,ij->i", p - q, n)
        solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
        if rank < 6:
            # under-constrained directions get the minimum-norm update
            logger.debug(f"ICP iteration {iteration}: system rank {rank}")
        omega, delta_t = solution[:3], solution[3:]

        update = RigidTransform(rotation=Rotation.from_rotvec(omega).as_matrix(), translation=delta_t)
        transform = update @ transform

        if np.linalg.norm(delta_t) < params.convergence_eps and np.linalg.norm(omega) < params.convergence_eps:
            break

    moved = transform_cloud(transform, model)
    source_idx, target_idx = _icp_correspondences(moved, scene, scene_index, max_distance, params.max_normal_angle)
    if len(source_idx) >= params.min_correspondences:
        residual = point_to_plane_residual(moved.positions[source_idx], scene.positions[target_idx],
                                           scene.normals[target_idx])
    return transform, residual


def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0) -> OrientedPointCloud:
    """Area-uniform random surface samples with the face normals of the sampled triangles"""
    tm = to_trimesh(mesh)
    points, face_index = trimesh.sample.sample_surface(tm, count, seed=seed)
    return OrientedPointCloud(positions=points, normals=tm.face_normals[face_index])


def dense_surface_points(mesh: TriangleMesh, spacing: float) -> np.ndarray:
    """Deterministic barycentric grid over every triangle, no two neighbors farther than ~spacing"""
    corners = mesh.corners()
    edges = np.stack([
        np.linalg.norm(corners[:, 1] - corners[:, 0], axis=1),
        np.linalg.norm(corners[:, 2] - corners[:, 1], axis=1),
        np.linalg.norm(corners[:, 0] - corners[:, 2], axis=1),
    ], axis=1)
    subdivisions = np.maximum(1, np.ceil(edges.max(axis=1) / spacing)).astype(int)

    chunks = []
    for n in np.unique(subdivisions):
        tri = corners[subdivisions == n]
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        w1 = i[keep] / n
        w2 = j[keep] / n
        w0 = 1.0 - w1 - w2
        weights = np.stack([w0, w1, w2], axis=1)
        chunks.append(np.einsum("bk,tkd->tbd", weights, tri).reshape(-1, 3))
    return np.unique(np.concatenate(chunks), axis=0)


def to_trimesh(mesh: TriangleMesh) -> trimesh.Trimesh:
    return trimesh.Trimesh(vertices=np.array(mesh.vertices), faces=np.array(mesh.triangles), process=False)


def adi_error(t1: RigidTransform, t2: RigidTransform, model: Union[TriangleMesh, np.ndarray],
              samples: int = 512, seed: int = 0) -> float:
    """Average over model points of the distance from T1·p1 to the closest T2·p2

    A mesh is first replaced by a fixed-size uniform surface sampling.
    """
    if isinstance(model, TriangleMesh):
        points = sample_surface(model, samples, seed=seed).positions
    else:
        points = np.asarray(model, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("ADI needs a nonempty model")
    distances, _ = SpatialIndex(t2.apply(points)).query(t1.apply(points))
    return float(np.mean(distances))


def estimate_normals(positions: np.ndarray, k_neighbors: int = 10,
                     pixels: Optional[np.ndarray] = None) -> OrientedPointCloud:
    """Local plane-fit normals over the k nearest neighbors, flipped toward the camera origin

    Points whose neighborhood is (nearly) collinear get a placeholder normal and
    are flagged invalid.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) < k_neighbors:
        raise ValueError(f"Normal estimation needs at least {k_neighbors} points, got {len(positions)}")

    _, neighbors = SpatialIndex(positions).query(positions, k=k_neighbors)
    neighbors = np.asarray(neighbors).reshape(len(positions), k_neighbors)
    local = positions[neighbors]
    centered = local - local.mean(axis=1, keepdims=True)
    covariance = np.einsum("nki,nkj->nij", centered, centered) / k_neighbors
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    normals = eigenvectors[:, :, 0]

    largest = np.maximum(eigenvalues[:, 2], np.finfo(float).tiny)
    valid = eigenvalues[:, 1] > RANK_TOLERANCE * largest
    normals[~valid] = np.array([0.0, 0.0, -1.0])

    flip = np.einsum("ij,ij->i", normals, -positions) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    if not np.all(valid):
        logger.debug(f"{np.count_nonzero(~valid)} points with degenerate normal neighborhoods")
    return OrientedPointCloud(positions=positions, normals=normals, pixels=pixels, valid_normals=valid)
