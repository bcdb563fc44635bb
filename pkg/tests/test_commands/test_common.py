"""Tests for shared command helpers"""
import argparse

import numpy as np
import pytest

from commands.common import format_matrix, load_config, parse_intrinsics, parse_pose, run_guarded
from config import settings
from exceptions import DatasetIOError, InputError, NoValidBasesError
from models.geometry import RigidTransform

IDENTITY = "1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1"


def _args(**overrides) -> argparse.Namespace:
    values = {"config": None, "seed": None, "workers": None, "command": "test"}
    values.update(overrides)
    return argparse.Namespace(**values)


class TestParsePose:
    """Tests for wrist prior parsing"""

    def test_inline_commas(self):
        """Test 16 comma-separated values"""
        assert np.allclose(parse_pose(IDENTITY).as_matrix(), np.eye(4))

    def test_file_with_rows(self, tmp_path):
        """Test a file holding four whitespace-separated rows"""
        path = tmp_path / "pose.txt"
        path.write_text("1 0 0 0.1\n0 1 0 0\n0 0 1 0.4\n0 0 0 1\n")
        assert np.allclose(parse_pose(str(path)).translation, [0.1, 0.0, 0.4])

    def test_wrong_count_raises_error(self):
        """Test that 15 values are rejected"""
        with pytest.raises(InputError) as exc_info:
            parse_pose("1 0 0 0 0 1 0 0 0 0 1 0 0 0 0")
        assert "got 15" in str(exc_info.value)

    def test_non_numeric_raises_error(self):
        """Test that words are rejected"""
        with pytest.raises(InputError):
            parse_pose("identity")


class TestLoadConfig:
    """Tests for config loading with command-line overrides"""

    def test_defaults_use_runtime_settings(self):
        """Test that without a file the seed and workers come from the settings"""
        config = load_config(_args())
        assert config.seed == settings.seed
        assert config.workers == settings.workers

    def test_seed_reaches_every_seeded_stage(self):
        """Test that --seed overrides the stage seeds"""
        config = load_config(_args(seed=9, workers=2))
        assert (config.seed, config.pso.rng_seed, config.registration.rng_seed) == (9, 9, 9)
        assert config.workers == 2

    def test_missing_file_raises_error(self, tmp_path):
        """Test that a missing config is an input error"""
        with pytest.raises(DatasetIOError):
            load_config(_args(config=str(tmp_path / "absent.json")))

    def test_invalid_value_raises_error(self, tmp_path):
        """Test that a violated invariant names the offending key"""
        path = tmp_path / "config.json"
        path.write_text('{"pso": {"num_particles": 0}}')
        with pytest.raises(InputError) as exc_info:
            load_config(_args(config=str(path)))
        assert "pso.num_particles" in str(exc_info.value)

    def test_unknown_key_raises_error(self, tmp_path):
        """Test that unknown keys are rejected"""
        path = tmp_path / "config.json"
        path.write_text('{"swarm": {}}')
        with pytest.raises(InputError):
            load_config(_args(config=str(path)))


class TestParseIntrinsics:
    """Tests for intrinsics files"""

    def test_round_trip(self, tmp_path, small_camera):
        """Test reading a JSON intrinsics file"""
        path = tmp_path / "camera.json"
        path.write_text(small_camera.model_dump_json())
        assert parse_intrinsics(str(path)) == small_camera

    def test_absent_flag(self):
        """Test that no flag means no intrinsics"""
        assert parse_intrinsics(None) is None


class TestRunGuarded:
    """Tests for the error boundary"""

    def test_success_passes_exit_code(self):
        """Test that a command's own exit code is returned"""
        assert run_guarded(lambda args: 0, _args()) == 0

    def test_pipeline_error(self, capsys):
        """Test the category line and exit code of a pipeline failure"""
        def fail(args):
            raise NoValidBasesError({"ppf": 3})

        assert run_guarded(fail, _args()) == 3
        assert capsys.readouterr().err == "error: pipeline_error: no valid bases (ppf=3)\n"

    def test_unexpected_error(self, capsys):
        """Test that anything else is an internal error"""
        def crash(args):
            raise KeyError("lost")

        assert run_guarded(crash, _args()) == 4
        assert capsys.readouterr().err.startswith("error: internal_error: ")


class TestFormatMatrix:
    """Tests for pose printing"""

    def test_four_rows(self):
        """Test four lines of four values"""
        text = format_matrix(RigidTransform.from_translation([0.0, 0.0, 0.5]))
        assert text == "1 0 0 0\n0 1 0 0\n0 0 1 0.5\n0 0 0 1\n"
