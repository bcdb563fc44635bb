"""ADI recall, recall curves, ablation runs and the stage timing report"""
import logging
import statistics
from typing import Dict, List, Optional, Sequence

import numpy as np

from exceptions import PoseEstimationError
from models.enums import AblationVariant, PipelineStage
from models.evaluation import AblationRow, EvalResult, RecallPoint, SceneResult, StageTiming, TimingReport
from models.params import PipelineConfig
from models.scene import ManifestEntry, pose_to_row_major
from services.geometry import adi_error
from services.hand_model import load_hand_model
from services.parallel import parallel_map
from services.pipeline import ObjectModel, PoseEstimationPipeline, StageTimer, perturb_wrist_prior
from storage.dataset_store import DatasetStore

logger = logging.getLogger(__name__)


def recall_at(errors: Sequence[float], epsilon: float) -> float:
    """Fraction of errors strictly below epsilon; failures carry inf"""
    if len(errors) == 0:
        return 0.0
    return float(np.count_nonzero(np.asarray(errors, dtype=float) < epsilon)) / len(errors)


def recall_curve(errors: Sequence[float], epsilons: Sequence[float]) -> List[RecallPoint]:
    return [RecallPoint(epsilon_m=epsilon, recall=recall_at(errors, epsilon)) for epsilon in epsilons]


def summarize(scenes: List[SceneResult], config: PipelineConfig, variant: AblationVariant = AblationVariant.FULL,
              epsilon: Optional[float] = None) -> EvalResult:
    """Aggregate per-scene results into recall at epsilon and the recall curve"""
    epsilon = config.evaluation.epsilon if epsilon is None else epsilon
    errors = [scene.adi_error for scene in scenes]
    return EvalResult(
        variant=variant,
        epsilon=epsilon,
        scenes=scenes,
        recall=recall_at(errors, epsilon),
        curve=recall_curve(errors, config.evaluation.curve_epsilons())
    )


class SceneEvaluator:
    """Runs one pipeline variant over manifest scenes, caching hand and object models by id"""

    def __init__(self, store: DatasetStore, config: PipelineConfig = PipelineConfig(),
                 variant: AblationVariant = AblationVariant.FULL):
        self.store = store
        self.config = config
        self.variant = variant
        # scenes run in parallel, so each pipeline runs single-threaded
        self.scene_config = config.with_overrides(workers=1)
        self.pipelines: Dict[str, PoseEstimationPipeline] = {}
        self.objects: Dict[str, ObjectModel] = {}

    def prepare(self, entries: Sequence[ManifestEntry]) -> None:
        """Build every model the entries need before scenes fan out"""
        for entry in entries:
            if entry.hand_id not in self.pipelines:
                self.pipelines[entry.hand_id] = PoseEstimationPipeline(
                    load_hand_model(entry.hand_id, seed=self.scene_config.seed), self.scene_config, self.variant)
            if entry.object_id not in self.objects:
                self.objects[entry.object_id] = ObjectModel.load(entry.object_id, self.scene_config)

    def evaluate_scene(self, entry: ManifestEntry) -> SceneResult:
        """Pipeline failures become misses with the error recorded"""
        ground_truth = entry.object_transform()
        obj = self.objects[entry.object_id]
        timer = StageTimer()
        evaluation = self.config.evaluation
        prior = perturb_wrist_prior(entry.wrist_transform(), evaluation.wrist_prior_translation_noise,
                                    evaluation.wrist_prior_rotation_noise, np.random.SeedSequence([entry.seed, 1]))
        try:
            depth, cam = self.store.load_depth(entry)
            result = self.pipelines[entry.hand_id].run(depth, cam, prior, obj, timer)
        except PoseEstimationError as e:
            logger.warning(f"Scene {entry.scene_id} failed: {e}")
            return SceneResult(
                scene_id=entry.scene_id,
                ground_truth_pose=pose_to_row_major(ground_truth),
                error=str(e),
                stage_times=timer.finish(),
                total_time=timer.total
            )

        error = adi_error(result.pose.transform, ground_truth, obj.adi_points)
        logger.info(f"Scene {entry.scene_id}: ADI {error * 1000:.2f} mm")
        return SceneResult(
            scene_id=entry.scene_id,
            estimated_pose=pose_to_row_major(result.pose.transform),
            ground_truth_pose=pose_to_row_major(ground_truth),
            adi_error=error,
            lcp=result.pose.lcp,
            render_score=result.pose.render_score,
            stage_times=result.stage_times,
            total_time=result.total_time
        )


def evaluate(entries: Sequence[ManifestEntry], store: DatasetStore, config: PipelineConfig = PipelineConfig(),
             epsilon: Optional[float] = None, variant: AblationVariant = AblationVariant.FULL) -> EvalResult:
    """Run the pipeline on every scene and compute recall at epsilon plus the recall curve"""
    if not entries:
        raise ValueError("Evaluation needs a nonempty manifest")
    evaluator = SceneEvaluator(store, config, variant)
    evaluator.prepare(entries)
    scenes = parallel_map(evaluator.evaluate_scene, entries, config.workers)
    result = summarize(scenes, config, variant, epsilon)
    logger.info(f"Variant {variant.value}: recall {result.recall:.3f} at {result.epsilon * 1000:.1f} mm over {len(scenes)} scenes")
    return result


def ablation_run(entries: Sequence[ManifestEntry], store: DatasetStore, variants: Sequence[AblationVariant],
                 config: PipelineConfig = PipelineConfig()) -> List[EvalResult]:
    """One evaluation per variant over the same scenes and seeds"""
    return [evaluate(entries, store, config, variant=variant) for variant in variants]


def ablation_table(results: Sequence[EvalResult]) -> List[AblationRow]:
    return [AblationRow(variant=result.variant, recall=result.recall, scenes=len(result.scenes)) for result in results]


def timing_report(result: EvalResult) -> TimingReport:
    """Mean and median wall time per stage over all scenes"""
    stages = []
    for stage in PipelineStage:
        samples = [scene.stage_times.get(stage, 0.0) for scene in result.scenes] or [0.0]
        stages.append(StageTiming(stage=stage, mean=statistics.fmean(samples), median=statistics.median(samples)))
    totals = [scene.total_time for scene in result.scenes] or [0.0]
    return TimingReport(stages=stages, total_mean=statistics.fmean(totals))
