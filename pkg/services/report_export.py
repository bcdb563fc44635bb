"""CSV and summary export of benchmark results and pipeline intermediates"""
import csv
import logging
from pathlib import Path
from typing import List, Sequence, Union

from exceptions import DatasetIOError
from models.enums import PipelineStage
from models.evaluation import AblationRow, EvalResult, SceneResult, TimingReport
from models.hypothesis import PoseHypothesis
from models.scene import pose_to_row_major

logger = logging.getLogger(__name__)

RECALL_CURVE_FILENAME = "recall_curve.csv"
SUMMARY_FILENAME = "summary.txt"
ABLATION_FILENAME = "ablation.csv"
TIMING_FILENAME = "timing.csv"
HYPOTHESES_FILENAME = "hypotheses.csv"


def format_float(value) -> str:
    """Shortest stable text for a float; empty for missing values"""
    if value is None:
        return ""
    return f"{float(value):.9g}"


def _write_rows(path: Path, headers: List[str], rows: Sequence[List[str]]) -> Path:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(headers)
            writer.writerows(rows)
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        raise DatasetIOError(path, str(e))
    return path


class EvaluationReportService:
    """Service for exporting an evaluation run to an output directory"""

    def __init__(self, out_dir: Union[str, Path], prefix: str = "scenes"):
        """Initialize the export service

        Args:
            out_dir: directory the reports are written to, created when missing
            prefix: per-scene CSV file name prefix
        """
        self.out_dir = Path(out_dir)
        self.prefix = prefix

    def _ensure_dir(self):
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DatasetIOError(self.out_dir, str(e))

    def _get_csv_headers(self) -> List[str]:
        return (["scene_id", "adi_error_m", "success", "lcp", "render_score", "error", "total_time_s"]
                + [f"{stage.value}_s" for stage in PipelineStage]
                + [f"est_{i}" for i in range(16)] + [f"gt_{i}" for i in range(16)])

    def _convert_scene_to_row(self, scene: SceneResult, epsilon: float) -> List[str]:
        estimated = scene.estimated_pose or [None] * 16
        return ([
            scene.scene_id,
            format_float(scene.adi_error),
            "1" if scene.adi_error < epsilon else "0",
            format_float(scene.lcp),
            format_float(scene.render_score),
            scene.error or "",
            format_float(scene.total_time)
        ]
            + [format_float(scene.stage_times.get(stage, 0.0)) for stage in PipelineStage]
            + [format_float(value) for value in estimated]
            + [format_float(value) for value in scene.ground_truth_pose])

    def export_scenes(self, result: EvalResult) -> Path:
        """Write one row per scene to <prefix>.csv"""
        self._ensure_dir()
        if not result.scenes:
            logger.warning("No scenes to export; writing headers only")
        rows = [self._convert_scene_to_row(scene, result.epsilon) for scene in result.scenes]
        path = _write_rows(self.out_dir / f"{self.prefix}.csv", self._get_csv_headers(), rows)
        logger.info(f"Wrote {len(rows)} scene rows to {path}")
        return path

    def export_recall_curve(self, result: EvalResult) -> Path:
        self._ensure_dir()
        rows = [[format_float(point.epsilon_m), format_float(point.recall)] for point in result.curve]
        return _write_rows(self.out_dir / RECALL_CURVE_FILENAME, ["epsilon_m", "recall"], rows)

    def export_summary(self, result: EvalResult) -> Path:
        self._ensure_dir()
        path = self.out_dir / SUMMARY_FILENAME
        try:
            path.write_text(summary_text(result), encoding="utf-8")
        except OSError as e:
            raise DatasetIOError(path, str(e))
        return path

    def export_ablation(self, rows: Sequence[AblationRow]) -> Path:
        self._ensure_dir()
        data = [[row.variant.value, format_float(row.recall), str(row.scenes)] for row in rows]
        return _write_rows(self.out_dir / ABLATION_FILENAME, ["variant", "recall", "scenes"], data)

    def export_timing(self, report: TimingReport) -> Path:
        self._ensure_dir()
        data = [[timing.stage.value, format_float(timing.mean), format_float(timing.median)] for timing in report.stages]
        data.append(["total", format_float(report.total_mean), ""])
        return _write_rows(self.out_dir / TIMING_FILENAME, ["stage", "mean_s", "median_s"], data)

    def export_run(self, result: EvalResult, timing: TimingReport) -> List[Path]:
        """Per-scene CSV, recall curve, timing table and summary of one evaluation"""
        paths = [
            self.export_scenes(result),
            self.export_recall_curve(result),
            self.export_timing(timing),
            self.export_summary(result),
        ]
        logger.info(f"Export completed: {len(paths)} file(s) in {self.out_dir}")
        return paths


def summary_text(result: EvalResult) -> str:
    """Human-readable block with recall and failure counts"""
    total = len(result.scenes)
    successes = sum(1 for scene in result.scenes if scene.adi_error < result.epsilon)
    failures = sum(1 for scene in result.scenes if scene.failed)
    lines = [
        f"variant: {result.variant.value}",
        f"scenes: {total}",
        f"epsilon_m: {format_float(result.epsilon)}",
        f"recall: {format_float(result.recall)} ({successes}/{total})",
        f"pipeline_failures: {failures}",
    ]
    return "\n".join(lines) + "\n"


def export_hypotheses(hypotheses: Sequence[PoseHypothesis], path: Union[str, Path]) -> Path:
    """One row per hypothesis: LCP, render score and the row-major pose"""
    rows = [[str(i), format_float(h.lcp), format_float(h.render_score)]
            + [format_float(value) for value in pose_to_row_major(h.transform)]
            for i, h in enumerate(hypotheses)]
    headers = ["index", "lcp", "render_score"] + [f"t_{i}" for i in range(16)]
    return _write_rows(Path(path), headers, rows)
