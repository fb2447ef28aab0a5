"""Tests for configuration loading and validation."""

import json

import pytest

from config.settings import FusionConfig, Settings
from core.errors import MalformedDocumentError, MissingFileError


class TestSettings:
    """Settings defaults, environment and documents."""

    def test_defaults(self):
        """Defaults match the documented values."""
        settings = Settings()
        assert settings.rectifier.lambda_depth == 0.01
        assert settings.rectifier.robust_delta == 0.05
        assert settings.tracker.visibility_threshold == 0.5
        assert settings.evaluation.thresholds == (0.01, 0.02, 0.04, 0.08, 0.16)

    def test_nested_environment_override(self, monkeypatch):
        """RIGTRACK_TRACKER__K sets tracker.k."""
        monkeypatch.setenv("RIGTRACK_TRACKER__K", "12")
        assert Settings().tracker.k == 12

    def test_document_merges_over_environment(self, tmp_path, monkeypatch):
        """A document overrides only the fields it names."""
        monkeypatch.setenv("RIGTRACK_TRACKER__K", "12")
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"tracker": {"iterations": 7}}))
        settings = Settings.from_document(path)
        assert settings.tracker.iterations == 7
        assert settings.tracker.k == 12

    def test_keyword_overrides_win(self, tmp_path):
        """Explicit overrides beat the document."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"threads": 4}))
        assert Settings.from_document(path, threads=2).threads == 2

    def test_missing_document(self, tmp_path):
        """A missing document raises MissingFileError."""
        with pytest.raises(MissingFileError):
            Settings.from_document(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        """Broken JSON raises MalformedDocumentError."""
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(MalformedDocumentError):
            Settings.from_document(path)

    def test_invalid_value_in_document(self, tmp_path):
        """Values failing validation raise MalformedDocumentError."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"tracker": {"visibility_threshold": 2.0}}))
        with pytest.raises(MalformedDocumentError):
            Settings.from_document(path)

    def test_threads_must_be_positive(self):
        """Zero worker threads is rejected."""
        with pytest.raises(ValueError):
            Settings(threads=0)

    def test_run_seed_seeds_rectifier(self):
        """A run seed without an explicit rectifier seed carries over."""
        assert Settings(seed=5).rectifier.seed == 5

    def test_even_patch_size_rejected(self):
        """Feature patches must have a centre pixel."""
        with pytest.raises(ValueError):
            FusionConfig(patch_size=6)

    def test_thresholds_must_ascend(self):
        """Threshold ladders are strictly ascending."""
        with pytest.raises(ValueError):
            Settings(evaluation={"thresholds": (0.02, 0.01)})

    def test_validate_at_startup_creates_output_dir(self, tmp_path):
        """The output directory is created when missing."""
        out = tmp_path / "results" / "run"
        Settings().validate_at_startup(out)
        assert out.is_dir()

    def test_validate_at_startup_rejects_file_as_output(self, tmp_path):
        """An existing file cannot be the output directory."""
        path = tmp_path / "file"
        path.write_text("x")
        with pytest.raises(ValueError):
            Settings().validate_at_startup(path)
