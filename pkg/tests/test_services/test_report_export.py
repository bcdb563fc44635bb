"""Tests for CSV and summary export of evaluation results"""
import csv

import pytest

from models.enums import AblationVariant, PipelineStage
from models.evaluation import AblationRow
from models.geometry import RigidTransform
from models.hypothesis import PoseHypothesis
from models.params import PipelineConfig
from services.evaluation import summarize, timing_report
from services.report_export import EvaluationReportService, export_hypotheses, format_float, summary_text


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def eval_result(sample_scene_results):
    return summarize(sample_scene_results, PipelineConfig())


class TestFormatFloat:
    """Tests for float formatting"""

    def test_values(self):
        """Test missing, finite and infinite values"""
        assert format_float(None) == ""
        assert format_float(0.001) == "0.001"
        assert format_float(float("inf")) == "inf"


class TestExportScenes:
    """Tests for the per-scene CSV"""

    def test_single_file(self, eval_result, tmp_path):
        """Test one row per scene with the success flag and pose columns"""
        path = EvaluationReportService(tmp_path).export_scenes(eval_result)
        assert path.name == "scenes.csv"
        rows = _read_csv(path)
        headers = rows[0]
        assert headers[:3] == ["scene_id", "adi_error_m", "success"]
        assert len(headers) == 7 + len(PipelineStage) + 32
        assert [row[2] for row in rows[1:]] == ["1", "0", "0"]
        failed = dict(zip(headers, rows[3]))
        assert failed["error"] == "no object points"
        assert failed["est_0"] == ""
        assert failed["adi_error_m"] == "inf"

    def test_prefix(self, eval_result, tmp_path):
        """Test that the prefix names the file"""
        path = EvaluationReportService(tmp_path, prefix="run").export_scenes(eval_result)
        assert path == tmp_path / "run.csv"
        assert len(_read_csv(path)) == 4

    def test_no_scenes(self, eval_result, tmp_path):
        """Test that an empty result writes only the headers"""
        empty = eval_result.model_copy(update={"scenes": []})
        rows = _read_csv(EvaluationReportService(tmp_path).export_scenes(empty))
        assert len(rows) == 1
        assert rows[0][0] == "scene_id"


class TestExportRun:
    """Tests for the recall curve, timing, ablation and summary files"""

    def test_export_run_files(self, eval_result, tmp_path):
        """Test every file of a run export"""
        out_dir = tmp_path / "report"
        paths = EvaluationReportService(out_dir).export_run(eval_result, timing_report(eval_result))
        assert [path.name for path in paths] == ["scenes.csv", "recall_curve.csv", "timing.csv", "summary.txt"]
        curve = _read_csv(out_dir / "recall_curve.csv")
        assert curve[0] == ["epsilon_m", "recall"]
        assert len(curve) == 21
        timing = _read_csv(out_dir / "timing.csv")
        assert [row[0] for row in timing[1:]] == [stage.value for stage in PipelineStage] + ["total"]

    def test_ablation_csv(self, tmp_path):
        """Test one line per variant"""
        rows = [AblationRow(variant=AblationVariant.BASELINE, recall=0.25, scenes=4),
                AblationRow(variant=AblationVariant.FULL, recall=0.75, scenes=4)]
        path = EvaluationReportService(tmp_path).export_ablation(rows)
        assert _read_csv(path) == [["variant", "recall", "scenes"], ["baseline", "0.25", "4"], ["full", "0.75", "4"]]

    def test_summary_text(self, eval_result):
        """Test recall and failure counts in the summary"""
        text = summary_text(eval_result)
        assert "recall: 0.333333333 (1/3)" in text
        assert "pipeline_failures: 1" in text
        assert text.startswith("variant: full\n")


class TestExportHypotheses:
    """Tests for the hypothesis dump"""

    def test_rows(self, tmp_path):
        """Test index, scores and row-major pose per hypothesis"""
        hypotheses = [PoseHypothesis(transform=RigidTransform.from_translation([0.0, 0.0, 0.5]), lcp=0.5),
                      PoseHypothesis(transform=RigidTransform.identity(), lcp=0.25, render_score=3.0)]
        rows = _read_csv(export_hypotheses(hypotheses, tmp_path / "hypotheses.csv"))
        assert rows[0][:3] == ["index", "lcp", "render_score"]
        assert rows[1][:3] == ["0", "0.5", ""]
        assert rows[1][3 + 11] == "0.5"
        assert rows[2][:3] == ["1", "0.25", "3"]
