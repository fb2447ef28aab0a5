"""Tests for the command-line interface."""

import json

import pytest
from click.testing import CliRunner

from tools.cli import VERSION, main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory, runner):
    out = tmp_path_factory.mktemp("cli") / "seq"
    result = runner.invoke(
        main, ["--threads", "1", "synth", "default", str(out), "--width", "160", "--height", "120", "--frames", "3"]
    )
    assert result.exit_code == 0, result.output
    return out


class TestCli:
    """Commands end to end on a tiny scene."""

    def test_version(self, runner):
        """version prints the project version."""
        result = runner.invoke(main, ["version"])
        assert result.exit_code == 0
        assert VERSION in result.output

    def test_synth_writes_sequence(self, synth_dir):
        """synth writes the manifest and the ground truth."""
        manifest = json.loads((synth_dir / "sequence.json").read_text())
        assert manifest["num_frames"] == 3
        assert manifest["views"][0] == {"width": 160, "height": 120}
        assert (synth_dir / "ground_truth.json").is_file()

    def test_track_then_evaluate(self, runner, synth_dir, tmp_path):
        """Tracking with the stored calibration scores AJ >= 95 against the ground truth."""
        tracks = tmp_path / "tracks.json"
        result = runner.invoke(main, ["--threads", "1", "track", str(synth_dir), str(tracks)])
        assert result.exit_code == 0, result.output
        assert tracks.is_file() and tracks.with_suffix(".csv").is_file()
        report = tmp_path / "report.json"
        result = runner.invoke(
            main, ["eval-track", str(tracks), str(synth_dir / "ground_truth.json"), "--out", str(report)]
        )
        assert result.exit_code == 0, result.output
        assert "AJ" in result.output
        data = json.loads(report.read_text())
        assert data["aj"] >= 95.0

    def test_consistency_of_exact_rig(self, runner, synth_dir):
        """consistency prints mean and median residuals."""
        result = runner.invoke(main, ["consistency", str(synth_dir)])
        assert result.exit_code == 0, result.output
        assert "median" in result.output

    def test_consistency_lists_worst_samples(self, runner, synth_dir):
        """--worst N adds a table of the largest residuals."""
        plain = runner.invoke(main, ["consistency", str(synth_dir)])
        result = runner.invoke(main, ["consistency", str(synth_dir), "--worst", "3"])
        assert result.exit_code == 0, result.output
        assert "source" in result.output
        assert "source" not in plain.output

    def test_fuse_dump(self, runner, synth_dir, tmp_path):
        """fuse writes an ORPC file for the chosen frame."""
        out = tmp_path / "cloud.orpc"
        result = runner.invoke(main, ["fuse", str(synth_dir), str(out), "--frame", "1"])
        assert result.exit_code == 0, result.output
        assert out.read_bytes()[:4] == b"ORPC"

    def test_fuse_frame_out_of_range(self, runner, synth_dir, tmp_path):
        """A frame outside the sequence is a usage error."""
        result = runner.invoke(main, ["fuse", str(synth_dir), str(tmp_path / "c.orpc"), "--frame", "9"])
        assert result.exit_code == 2

    def test_unknown_hint_exits_one(self, runner, synth_dir, tmp_path):
        """Bad hint names are reported on one line with status 1."""
        result = runner.invoke(main, ["rectify", str(synth_dir), str(tmp_path / "r.json"), "--hints", "rgb,lidar"])
        assert result.exit_code == 1
        assert "Error:" in result.output

    def test_unknown_preset_exits_one(self, runner, tmp_path):
        """An unknown scene name is an error, not a traceback."""
        result = runner.invoke(main, ["synth", "no-such-scene", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert "Error:" in result.output

    def test_broken_sequence_exits_one(self, runner, tmp_path):
        """A directory without a manifest cannot be loaded."""
        (tmp_path / "empty").mkdir()
        result = runner.invoke(main, ["consistency", str(tmp_path / "empty")])
        assert result.exit_code == 1
        assert "sequence.json" in result.output
