"""Hypothesis clustering, ICP refinement, physics pruning and render-based final selection"""
import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from exceptions import DegenerateCorrespondenceError, NoHypothesesError
from models.camera import CameraIntrinsics, DepthImage
from models.geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from models.hand import HandModel, HandState
from models.hypothesis import PoseHypothesis
from models.params import ClusterParams, IcpParams, LcpParams, PhysicsParams, RenderParams, RoiParams
from models.sdf import SignedDistanceField
from services.geometry import SpatialIndex, geodesic_rotation_distance, lcp_score, point_to_plane_icp
from services.hand_model import posed_hand_meshes, roi_bounds, sdf_query
from services.parallel import parallel_map
from services.render import NEAR_PLANE, combine_depth, render_depth

logger = logging.getLogger(__name__)


def ranking_key(hypothesis: PoseHypothesis, position: int) -> Tuple[float, float, int]:
    """Descending LCP, then lower translation norm, then input order"""
    return -hypothesis.lcp, float(np.linalg.norm(hypothesis.transform.translation)), position


def ranked(hypotheses: Sequence[PoseHypothesis]) -> List[PoseHypothesis]:
    order = sorted(range(len(hypotheses)), key=lambda i: ranking_key(hypotheses[i], i))
    return [hypotheses[i] for i in order]


# ---------------------------------------------------------------------------
# Clustering and refinement
# ---------------------------------------------------------------------------

def cluster_hypotheses(hypotheses: Sequence[PoseHypothesis], params: ClusterParams = ClusterParams()) -> List[List[int]]:
    """Partition hypotheses into clusters of indices

    Translations are grouped by single linkage within translation_radius; each
    group is split by greedy leader clustering on rotation, leaders taken in
    descending LCP order.
    """
    n = len(hypotheses)
    if n == 0:
        return []
    translations = np.array([h.transform.translation for h in hypotheses])
    pairs = cKDTree(translations).query_pairs(params.translation_radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, components = connected_components(graph, directed=False)

    clusters: List[List[int]] = []
    for component in range(components.max() + 1):
        members = sorted(np.flatnonzero(components == component).tolist(), key=lambda i: (-hypotheses[i].lcp, i))
        leaders: List[int] = []
        groups: List[List[int]] = []
        for index in members:
            rotation = hypotheses[index].transform.rotation
            for leader, group in zip(leaders, groups):
                if geodesic_rotation_distance(hypotheses[leader].transform.rotation, rotation) <= params.rotation_radius:
                    group.append(index)
                    break
            else:
                leaders.append(index)
                groups.append([index])
        clusters.extend(sorted(group) for group in groups)
    logger.info(f"Clustered {n} hypotheses into {len(clusters)} clusters")
    return clusters


def poses_agree(a: RigidTransform, b: RigidTransform, max_translation: float, max_rotation: float) -> bool:
    return (np.linalg.norm(a.translation - b.translation) <= max_translation
            and geodesic_rotation_distance(a.rotation, b.rotation) <= max_rotation)


def refine_hypothesis(hypothesis: PoseHypothesis, model_samples: OrientedPointCloud, object_cloud: OrientedPointCloud,
                      scene_index: SpatialIndex, icp: IcpParams = IcpParams(), lcp: LcpParams = LcpParams()) -> PoseHypothesis:
    """Point-to-plane ICP, keeping whichever of the pre/post pose has the higher LCP"""
    before = lcp_score(model_samples, scene_index, hypothesis.transform, lcp)
    try:
        transform, _ = point_to_plane_icp(model_samples, object_cloud, scene_index, hypothesis.transform, icp, lcp)
    except DegenerateCorrespondenceError:
        return PoseHypothesis(transform=hypothesis.transform, lcp=before)
    after = lcp_score(model_samples, scene_index, transform, lcp)
    if after >= before:
        return PoseHypothesis(transform=transform, lcp=after)
    return PoseHypothesis(transform=hypothesis.transform, lcp=before)


def refine_and_truncate(hypotheses: Sequence[PoseHypothesis], clusters: Sequence[Sequence[int]],
                        model_samples: OrientedPointCloud, object_cloud: OrientedPointCloud,
                        params: ClusterParams = ClusterParams(), icp: IcpParams = IcpParams(),
                        lcp: LcpParams = LcpParams(), refine: bool = True, workers: int = 1) -> List[PoseHypothesis]:
    """Best representative per cluster, ICP refined, merged, top_k by LCP"""
    if not clusters:
        raise ValueError("Refinement needs at least one cluster")
    representatives = [hypotheses[min(cluster, key=lambda i: (-hypotheses[i].lcp, i))] for cluster in clusters]

    if refine:
        scene_index = SpatialIndex(object_cloud.positions)
        representatives = parallel_map(
            lambda h: refine_hypothesis(h, model_samples, object_cloud, scene_index, icp, lcp),
            representatives,
            workers
        )

    merged: List[PoseHypothesis] = []
    for candidate in ranked(representatives):
        if any(poses_agree(kept.transform, candidate.transform, params.merge_translation, params.merge_rotation)
               for kept in merged):
            continue
        merged.append(candidate)
    logger.info(f"{len(representatives)} representatives merged into {len(merged)}; keeping top {params.top_k}")
    return merged[:params.top_k]


# ---------------------------------------------------------------------------
# Physics pruning
# ---------------------------------------------------------------------------

class PruneResult(BaseModel):
    kept: List[PoseHypothesis]
    rejected_penetration: int = 0
    rejected_separation: int = 0

    model_config = ConfigDict(frozen=True)


def contact_extremes(hypothesis: PoseHypothesis, object_samples: np.ndarray, hand_sdf: SignedDistanceField) -> float:
    """Smallest hand SDF value over the posed object samples"""
    return float(np.min(sdf_query(hand_sdf, hypothesis.transform.apply(object_samples))))


def physics_prune(hypotheses: Sequence[PoseHypothesis], object_samples: np.ndarray, hand_sdf: SignedDistanceField,
                  params: PhysicsParams = PhysicsParams(), workers: int = 1) -> PruneResult:
    """Drop poses that sink deeper than max_penetration into the hand or float beyond max_separation

    An empty `kept` list is a valid outcome; the caller decides the fallback.
    """
    object_samples = np.asarray(object_samples, dtype=float)
    minima = parallel_map(lambda h: contact_extremes(h, object_samples, hand_sdf), hypotheses, workers)
    kept, penetrating, separated = [], 0, 0
    for hypothesis, minimum in zip(hypotheses, minima):
        if minimum < -params.max_penetration:
            penetrating += 1
        elif minimum > params.max_separation:
            separated += 1
        else:
            kept.append(hypothesis)
    logger.info(f"Physics pruning kept {len(kept)}/{len(hypotheses)} "
                f"(penetration {penetrating}, separation {separated})")
    return PruneResult(kept=kept, rejected_penetration=penetrating, rejected_separation=separated)


# ---------------------------------------------------------------------------
# Render scoring
# ---------------------------------------------------------------------------

class SelectionResult(BaseModel):
    best: PoseHypothesis
    scored: List[PoseHypothesis] = Field(..., description="every input with its render score, input order")
    retained: int

    model_config = ConfigDict(frozen=True)


def roi_pixel_window(model: HandModel, wrist_pose: RigidTransform, cam: CameraIntrinsics,
                     roi: RoiParams = RoiParams()) -> Tuple[slice, slice]:
    """Bounding pixel rectangle of the projected ROI box, whole image if it is behind the camera"""
    lower, upper = roi_bounds(model, roi.margin_fraction)
    corners = np.array(list(itertools.product(*zip(lower, upper))))
    camera_corners = wrist_pose.apply(corners)
    in_front = camera_corners[:, 2] > NEAR_PLANE
    if not np.all(in_front):
        return slice(0, cam.height), slice(0, cam.width)
    pixels = cam.project(camera_corners)
    c0 = int(np.clip(np.floor(pixels[:, 0].min()), 0, cam.width - 1))
    c1 = int(np.clip(np.ceil(pixels[:, 0].max()), 0, cam.width - 1))
    r0 = int(np.clip(np.floor(pixels[:, 1].min()), 0, cam.height - 1))
    r1 = int(np.clip(np.ceil(pixels[:, 1].max()), 0, cam.height - 1))
    return slice(r0, r1 + 1), slice(c0, c1 + 1)


def depth_discrepancy(observed: np.ndarray, rendered: np.ndarray, cap: float) -> float:
    """Σ min(|d_obs − d_rend|, cap) over pixels where at least one depth is valid"""
    considered = (observed > 0) | (rendered > 0)
    return float(np.minimum(np.abs(observed - rendered), cap)[considered].sum())


def render_score(hypothesis: PoseHypothesis, observed: DepthImage, hand_depth: np.ndarray, object_mesh: TriangleMesh,
                 cam: CameraIntrinsics, window: Tuple[slice, slice], params: RenderParams = RenderParams()) -> float:
    object_depth = render_depth([(object_mesh, hypothesis.transform)], cam).depth
    rendered = combine_depth(hand_depth[window], object_depth[window])
    return depth_discrepancy(observed.depth[window], rendered, params.discrepancy_cap)


def select_final(hypotheses: Sequence[PoseHypothesis], observed: DepthImage, hand_state: HandState,
                 model: HandModel, object_mesh: TriangleMesh, cam: CameraIntrinsics,
                 params: RenderParams = RenderParams(), roi: RoiParams = RoiParams(),
                 workers: int = 1) -> SelectionResult:
    """Keep the ⌈n/3⌉ best render scores, then return the highest LCP among them

    Raises:
        NoHypothesesError: the list is empty
    """
    if not hypotheses:
        raise NoHypothesesError()
    hand_depth = render_depth(posed_hand_meshes(model, hand_state), cam).depth
    window = roi_pixel_window(model, hand_state.wrist_pose, cam, roi)

    scores = parallel_map(lambda h: render_score(h, observed, hand_depth, object_mesh, cam, window, params),
                          hypotheses, workers)
    scored = [h.model_copy(update={"render_score": score}) for h, score in zip(hypotheses, scores)]

    retained = math.ceil(len(scored) * params.retain_fraction - 1e-9)
    by_score = sorted(range(len(scored)), key=lambda i: (scored[i].render_score, i))[:max(1, retained)]
    best_position = min(by_score, key=lambda i: ranking_key(scored[i], i))
    best = scored[best_position]
    logger.info(f"Selected hypothesis {best_position}: LCP {best.lcp:.3f}, render score {best.render_score:.4f}")
    return SelectionResult(best=best, scored=scored, retained=len(by_score))


def select_max_lcp(hypotheses: Sequence[PoseHypothesis]) -> Optional[PoseHypothesis]:
    """Highest LCP with the deterministic tie rule; None for an empty list"""
    if not hypotheses:
        return None
    return ranked(hypotheses)[0]
