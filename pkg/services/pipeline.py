"""End-to-end in-hand object pose estimation with per-stage timing"""
import logging
import time
from contextlib import contextmanager
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from exceptions import NoHypothesesError, RoiEmptyError, TooFewObjectPointsError
from models.camera import CameraIntrinsics, DepthImage
from models.enums import AblationVariant, PipelineStage
from models.geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from models.hand import FingerConfig, HandModel, HandState
from models.hypothesis import PoseHypothesis
from models.params import PipelineConfig, RoiParams
from services.geometry import estimate_normals, sample_surface
from services.hand_model import LinkSdfSet, compute_sdf, extract_roi, roi_mask, segment_object_cloud
from services.mesh_io import load_mesh
from services.pso import estimate_hand
from services.registration import ModelPairs, build_ppf_hashmap, generate_hypotheses, init_heuristic, uniform_heuristic
from services.render import back_project
from services.selection import cluster_hypotheses, physics_prune, refine_and_truncate, select_final, select_max_lcp

logger = logging.getLogger(__name__)

# Points in a registration base
BASE_SIZE = 4
# Normals are estimated on a crop this much wider than the ROI so the refined wrist still finds its points
PRECROP_MARGIN_FACTOR = 2.0


class ObjectModel:
    """Object mesh with everything registration and evaluation precompute from it"""

    def __init__(self, source: str, mesh: TriangleMesh, config: PipelineConfig = PipelineConfig()):
        self.source = source
        self.mesh = mesh
        self.samples = sample_surface(mesh, config.registration.model_samples, seed=config.seed)
        self.hashmap = build_ppf_hashmap(self.samples, config.ppf)
        self.pairs = ModelPairs(self.samples)
        self.adi_points = sample_surface(mesh, config.evaluation.adi_samples, seed=config.seed + 1).positions

    @classmethod
    def load(cls, source: str, config: PipelineConfig = PipelineConfig()) -> "ObjectModel":
        logger.info(f"Preparing object model {source}")
        return cls(source, load_mesh(source), config)


class StageTimer:
    """Accumulates wall time per pipeline stage; whatever is not in a stage counts as misc"""

    def __init__(self):
        self.times: Dict[PipelineStage, float] = {stage: 0.0 for stage in PipelineStage}
        self.started = time.perf_counter()
        self.total = 0.0

    @contextmanager
    def stage(self, stage: PipelineStage):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.times[stage] += time.perf_counter() - start

    def finish(self) -> Dict[PipelineStage, float]:
        self.total = time.perf_counter() - self.started
        timed = sum(seconds for stage, seconds in self.times.items() if stage is not PipelineStage.MISC)
        self.times[PipelineStage.MISC] = max(0.0, self.total - timed)
        return dict(self.times)


class PipelineResult(BaseModel):
    pose: PoseHypothesis
    hand_state: HandState
    roi_cloud: OrientedPointCloud
    object_cloud: OrientedPointCloud
    candidates: List[PoseHypothesis] = Field(..., description="refined hypotheses that reached final selection")
    hypothesis_count: int
    stage_times: Dict[PipelineStage, float]
    total_time: float
    pruning_fallback: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PoseEstimationPipeline:
    """Hand state, object hypotheses, refinement and scene reasoning for one hand model

    The variant switches components off for ablation runs: the baseline
    registers the raw ROI cloud with uniform sampling and no refinement.
    """

    def __init__(self, model: HandModel, config: PipelineConfig = PipelineConfig(),
                 variant: AblationVariant = AblationVariant.FULL):
        self.model = model
        self.config = config
        self.variant = variant
        self.link_sdfs = LinkSdfSet(model, config.cost.collision_voxel_size) if variant.uses_hand_segmentation else None

    def scene_cloud(self, depth: DepthImage, cam: CameraIntrinsics, wrist_prior: RigidTransform) -> OrientedPointCloud:
        """Back-project the pixels near the hand and estimate their normals

        Raises:
            RoiEmptyError: too few valid pixels near the wrist prior
        """
        positions, pixels = back_project(depth, cam)
        precrop = RoiParams(margin_fraction=PRECROP_MARGIN_FACTOR * self.config.roi.margin_fraction)
        mask = roi_mask(positions, wrist_prior, self.model, precrop) if len(positions) else np.zeros(0, dtype=bool)
        if np.count_nonzero(mask) < self.config.segmentation.normal_neighbors:
            raise RoiEmptyError()
        return estimate_normals(positions[mask], self.config.segmentation.normal_neighbors, pixels=pixels[mask])

    def run(self, depth: DepthImage, cam: CameraIntrinsics, wrist_prior: RigidTransform, obj: ObjectModel,
            timer: Optional[StageTimer] = None) -> PipelineResult:
        """Estimate the object pose (object -> camera) in one depth image

        Raises:
            PipelineError: a stage could not produce its output
        """
        config = self.config
        timer = timer or StageTimer()
        scene = self.scene_cloud(depth, cam, wrist_prior)

        with timer.stage(PipelineStage.HAND_ESTIMATION):
            if self.variant.uses_hand_segmentation:
                estimate = estimate_hand(scene, self.model, wrist_prior, config.pso, config.cost, config.roi,
                                         config.icp, self.link_sdfs, config.workers)
                hand_state, roi_cloud = estimate.state, estimate.roi_cloud
            else:
                hand_state = HandState(wrist_pose=wrist_prior,
                                       finger_configs=[FingerConfig.zeros(finger) for finger in self.model.fingers])
                roi_cloud = extract_roi(scene, wrist_prior, self.model, config.roi)

        with timer.stage(PipelineStage.HYPOTHESIS_GENERATION):
            hand_sdf = None
            if self.variant.uses_hand_segmentation:
                hand_sdf = compute_sdf(self.model, hand_state, config.sdf.voxel_size, config.roi, config.sdf)
                object_cloud = segment_object_cloud(roi_cloud, hand_sdf, config.segmentation.epsilon)
            else:
                object_cloud = roi_cloud
            if len(object_cloud) < BASE_SIZE:
                raise TooFewObjectPointsError(f"too few object points ({len(object_cloud)})")
            if self.variant.uses_heuristic:
                heuristic = init_heuristic(object_cloud, hand_sdf, config.heuristic)
            else:
                heuristic = uniform_heuristic(object_cloud, config.heuristic)
            batch = generate_hypotheses(object_cloud, obj.pairs, obj.hashmap, heuristic, config.registration,
                                        config.lcp, config.workers)
            if not batch.hypotheses:
                raise NoHypothesesError()

        with timer.stage(PipelineStage.CLUSTERING_ICP):
            clusters = cluster_hypotheses(batch.hypotheses, config.cluster)
            candidates = refine_and_truncate(batch.hypotheses, clusters, obj.samples, object_cloud, config.cluster,
                                             config.icp, config.lcp, refine=self.variant.uses_icp,
                                             workers=config.workers)

        fallback = False
        with timer.stage(PipelineStage.PRUNING_RENDER):
            if self.variant.uses_scene_reasoning:
                pruned = physics_prune(candidates, obj.samples.positions, hand_sdf, config.physics, config.workers)
                survivors = pruned.kept
                if not survivors:
                    logger.warning("Physics pruning rejected every hypothesis; falling back to the unpruned set")
                    survivors, fallback = candidates, True
                selection = select_final(survivors, depth, hand_state, self.model, obj.mesh, cam, config.render,
                                         config.roi, config.workers)
                best, candidates = selection.best, selection.scored
            else:
                best = select_max_lcp(candidates)

        stage_times = timer.finish()
        logger.info(f"Pose estimated in {timer.total:.2f}s: LCP {best.lcp:.3f}")
        return PipelineResult(
            pose=best,
            hand_state=hand_state,
            roi_cloud=roi_cloud,
            object_cloud=object_cloud,
            candidates=candidates,
            hypothesis_count=len(batch.hypotheses),
            stage_times=stage_times,
            total_time=timer.total,
            pruning_fallback=fallback
        )


def perturb_wrist_prior(wrist_pose: RigidTransform, translation_noise: float, rotation_noise: float,
                        rng: Union[np.random.Generator, int]) -> RigidTransform:
    """Wrist prior with Gaussian translation and axis-angle noise applied in the wrist frame"""
    rng = np.random.default_rng(rng)
    if translation_noise <= 0 and rotation_noise <= 0:
        return wrist_pose
    delta = RigidTransform.from_rotvec(rng.normal(0.0, rotation_noise, 3) if rotation_noise > 0 else np.zeros(3),
                                       rng.normal(0.0, translation_noise, 3) if translation_noise > 0 else np.zeros(3))
    return wrist_pose @ delta
