"""Hand state estimation: sequential per-finger particle swarm optimization"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.geometry import OrientedPointCloud, RigidTransform
from models.hand import FingerChain, FingerConfig, HandModel, HandState
from models.params import CostParams, IcpParams, PsoParams, RoiParams
from services.geometry import SpatialIndex, lcp_inlier_mask
from services.hand_model import (
    LinkSdfSet,
    extract_roi,
    finger_base_pose,
    posed_finger_points,
    refine_wrist_pose,
)
from services.parallel import parallel_map

logger = logging.getLogger(__name__)


class SwarmResult(BaseModel):
    """Global best of a finished swarm with its per-generation cost trace"""

    config: FingerConfig
    cost: float
    history: List[float] = Field(..., description="global-best cost after initialization and each generation")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class HandEstimate(BaseModel):
    """Estimated hand state plus the intermediate clouds later stages reuse"""

    state: HandState
    roi_cloud: OrientedPointCloud
    wrist_degenerate: bool = False
    finger_order: List[int]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def finger_cost(config: FingerConfig, scene_index: SpatialIndex, model: HandModel, finger_index: int,
                wrist_pose: RigidTransform, placed: Sequence[Optional[FingerConfig]], link_sdfs: LinkSdfSet,
                params: CostParams = CostParams()) -> float:
    """Cost of one finger configuration, lower is better

    λ_c · d when the finger penetrates the wrist or an already placed finger
    by d > 0, otherwise −LCP of the finger samples against the ROI cloud.
    """
    finger = model.fingers[finger_index]
    points = posed_finger_points(finger, config, wrist_pose)

    others = [None if i == finger_index else placed_config for i, placed_config in enumerate(placed)]
    penetration = max(0.0, -link_sdfs.min_distance(points, wrist_pose, others))
    if penetration > 0:
        return params.collision_penalty * penetration

    inliers = lcp_inlier_mask(points, scene_index, params.lcp.inlier_distance)
    return -float(np.count_nonzero(inliers)) / len(points)


def run_swarm(finger: FingerChain, evaluate, params: PsoParams, rng: np.random.Generator,
              workers: int = 1) -> SwarmResult:
    """Standard global-best PSO over the finger's joint box

    Random draws all happen here, before cost evaluations fan out, so the
    result does not depend on the worker count.
    """
    lower, upper = finger.lower_limits, finger.upper_limits
    max_velocity = params.velocity_clamp_fraction * (upper - lower)
    shape = (params.num_particles, finger.dof)

    positions = rng.uniform(lower, upper, size=shape)
    velocities = np.zeros(shape)
    costs = np.array(parallel_map(evaluate, list(positions), workers))
    best_positions = positions.copy()
    best_costs = costs.copy()
    leader = int(np.argmin(best_costs))
    history = [float(best_costs[leader])]

    for generation in range(params.num_iterations):
        r1 = rng.random(shape)
        r2 = rng.random(shape)
        velocities = (params.inertia_weight * velocities
                      + params.cognitive_weight * r1 * (best_positions - positions)
                      + params.social_weight * r2 * (best_positions[leader] - positions))
        velocities = np.clip(velocities, -max_velocity, max_velocity)
        positions = np.clip(positions + velocities, lower, upper)

        costs = np.array(parallel_map(evaluate, list(positions), workers))
        improved = costs < best_costs
        best_positions[improved] = positions[improved]
        best_costs[improved] = costs[improved]
        leader = int(np.argmin(best_costs))
        history.append(float(best_costs[leader]))
        logger.debug(f"Finger '{finger.name}' generation {generation + 1}: best cost {history[-1]:.4f}")

    return SwarmResult(config=FingerConfig(angles=best_positions[leader]), cost=history[-1], history=history)


def estimate_finger(model: HandModel, finger_index: int, scene_index: SpatialIndex, wrist_pose: RigidTransform,
                    placed: Sequence[Optional[FingerConfig]], link_sdfs: LinkSdfSet,
                    pso: PsoParams = PsoParams(), cost: CostParams = CostParams(), workers: int = 1) -> SwarmResult:
    """Run the swarm for one finger against the already placed fingers

    Each finger draws from its own stream seeded by (rng_seed, finger index).
    """
    if scene_index.is_empty:
        raise ValueError("Finger estimation needs a nonempty ROI cloud")
    rng = np.random.default_rng([pso.rng_seed, finger_index])

    def evaluate(angles: np.ndarray) -> float:
        return finger_cost(FingerConfig(angles=angles), scene_index, model, finger_index, wrist_pose, placed,
                           link_sdfs, cost)

    return run_swarm(model.fingers[finger_index], evaluate, pso, rng, workers)


def finger_order(model: HandModel, wrist_pose: RigidTransform) -> List[int]:
    """Fingers sorted by camera-frame depth of their rest-pose base, closest first

    Ties fall back to the Euclidean distance from the camera, then the finger index.
    """
    origins = [finger_base_pose(finger, wrist_pose).translation for finger in model.fingers]
    return sorted(range(len(origins)), key=lambda i: (origins[i][2], float(np.linalg.norm(origins[i])), i))


def estimate_hand(scene: OrientedPointCloud, model: HandModel, wrist_prior: RigidTransform,
                  pso: PsoParams = PsoParams(), cost: CostParams = CostParams(), roi: RoiParams = RoiParams(),
                  icp: IcpParams = IcpParams(), link_sdfs: Optional[LinkSdfSet] = None,
                  workers: int = 1) -> HandEstimate:
    """Crop the ROI, refine the wrist, then fit fingers one at a time closest first

    Raises:
        RoiEmptyError: no scene point lies inside the ROI of the wrist prior
    """
    roi_cloud = extract_roi(scene, wrist_prior, model, roi)
    wrist_pose, degenerate = refine_wrist_pose(roi_cloud, model, wrist_prior, icp, cost.lcp)
    # the crop follows the refined wrist
    roi_cloud = extract_roi(scene, wrist_pose, model, roi)

    if link_sdfs is None:
        link_sdfs = LinkSdfSet(model, cost.collision_voxel_size)
    scene_index = SpatialIndex(roi_cloud.positions)

    order = finger_order(model, wrist_pose)
    placed: List[Optional[FingerConfig]] = [None] * len(model.fingers)
    for finger_index in order:
        result = estimate_finger(model, finger_index, scene_index, wrist_pose, placed, link_sdfs, pso, cost, workers)
        placed[finger_index] = result.config
        logger.info(f"Finger '{model.fingers[finger_index].name}': angles {np.round(result.config.angles, 3).tolist()}, cost {result.cost:.4f}")

    state = HandState(wrist_pose=wrist_pose, finger_configs=placed)
    return HandEstimate(state=state, roi_cloud=roi_cloud, wrist_degenerate=degenerate, finger_order=order)


def estimate_hand_state(scene: OrientedPointCloud, model: HandModel, wrist_prior: RigidTransform,
                        pso: PsoParams = PsoParams(), cost: CostParams = CostParams(),
                        roi: RoiParams = RoiParams(), workers: int = 1) -> HandState:
    return estimate_hand(scene, model, wrist_prior, pso, cost, roi, workers=workers).state
