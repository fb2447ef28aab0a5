"""Tests for the experiment drivers."""

import math

import numpy as np
import pytest

from config.settings import Settings
from pipeline.experiments import evaluate_geometry, format_records, input_ablation, perturb_sequence, tracking_ablation
from pipeline.stages import track_sequence
from rectification.geometry import RectifiedGeometry
from synthetic.generate import generate_scene
from synthetic.perturb import PerturbationSpec
from synthetic.presets import default_scene, occlusion_scene, room_scene


class TestEvaluateGeometry:
    """Metrics of one geometry against ground truth."""

    def test_ground_truth_geometry(self, moving_sequence, test_settings):
        """The true rig is consistent and reproduces the true depth."""
        truth = moving_sequence
        geom = RectifiedGeometry.identity(truth.rig, truth.frames)
        record = evaluate_geometry("ground truth", geom, truth, truth.frames, test_settings, align_queries=False)
        assert record.consistency.median < 1e-6
        assert record.depth.abs_rel == 0.0
        assert record.tracking is not None
        row = record.as_row()
        assert row["label"] == "ground truth" and row["scale"] == 1.0

    def test_raw_perturbed_geometry_is_worse(self, moving_sequence, test_settings):
        """Unrectified noise shows up as cross-view inconsistency and depth error."""
        truth = moving_sequence
        noisy = perturb_sequence(truth, PerturbationSpec.standard(seed=2))
        raw = RectifiedGeometry.identity(noisy.rig, noisy.frames)
        record = evaluate_geometry("raw", raw, truth, noisy.frames, test_settings, with_tracking=False)
        assert record.consistency.mean > 1e-3
        assert record.depth.abs_rel > 1e-3
        assert record.tracking is None
        assert math.isnan(record.as_row()["aj"])


class TestInputAblation:
    """Rectification over the input grid."""

    def test_single_row_on_tiny_room(self):
        """One full-hint row yields one finite record."""
        settings = Settings(threads=1)
        settings.rectifier.samples_per_pair = 64
        settings.rectifier.max_iterations = 10
        records = input_ablation(
            room_scene(width=40, height=30),
            PerturbationSpec(rotation_deg=0.5, translation=0.02, seed=1),
            settings,
            grid=[(True, True, True)],
            with_tracking=False,
        )
        assert [r.label for r in records] == ["RGB+K+Pose+Depth"]
        assert np.isfinite(records[0].consistency.mean)
        table = format_records(records)
        assert table.splitlines()[1].startswith("RGB+K+Pose+Depth")


def _suite_settings() -> Settings:
    settings = Settings(threads=1, seed=0)
    settings.rectifier.samples_per_pair = 256
    return settings


class TestInputAblationOrdering:
    """Richer rectification inputs give more consistent geometry."""

    def test_depth_and_intrinsics_beat_fewer_inputs(self):
        """RGB+K+Depth < RGB+K <= RGB only in mean consistency error."""
        records = input_ablation(
            room_scene(width=160, height=120),
            PerturbationSpec.standard(seed=0),
            _suite_settings(),
            grid=[(False, False, False), (True, False, False), (True, False, True)],
            with_tracking=False,
        )
        by_label = {r.label: r.consistency.mean for r in records}
        assert by_label["RGB+K+Depth"] < by_label["RGB+K"] <= by_label["RGB"]


class TestTrackingAblation:
    """Tracking quality on ground-truth, rectified and raw geometry of the default scene."""

    @pytest.fixture(scope="class")
    def records(self):
        return tracking_ablation(
            default_scene(width=320, height=240, frames=8), PerturbationSpec.standard(seed=0), settings=_suite_settings()
        )

    def test_ground_truth_geometry_tracks_accurately(self, records):
        """Exact geometry: AJ >= 95, OA >= 95 and MTE <= 1 cm."""
        truth = records[0]
        assert truth.label == "ground truth"
        assert truth.tracking.aj >= 95.0
        assert truth.tracking.oa >= 95.0
        assert truth.tracking.mte <= 0.01

    def test_rectified_close_to_truth_and_raw_worse(self, records):
        """Rectified is within 5 AJ of ground truth; raw has lower AJ and higher MTE than rectified."""
        truth, rectified, raw = records
        assert [r.label for r in records] == ["ground truth", "rectified", "raw"]
        assert rectified.tracking.aj >= truth.tracking.aj - 5.0
        assert raw.tracking.aj < rectified.tracking.aj
        assert raw.tracking.mte > rectified.tracking.mte


class TestStaticQueries:
    """Points on furniture do not wander."""

    def test_table_anchor_stays_within_two_millimetres(self):
        """On exact geometry a static anchor's track stays at its query position."""
        truth = generate_scene(default_scene(width=320, height=240, frames=4), seed=0)
        geom = RectifiedGeometry.identity(truth.rig, truth.frames)
        queries = [q for q in truth.queries if q.id == "table_c"]
        tracks = track_sequence(truth.frames, geom, queries, _suite_settings())
        positions = tracks.get("table_c").positions
        assert np.all(np.linalg.norm(positions - queries[0].p_q, axis=1) <= 2e-3)


class TestOcclusionTracking:
    """Tracking through the occlusion scenes on exact geometry."""

    def _track(self, mode: str, frames: int):
        truth = generate_scene(occlusion_scene(mode, width=320, height=240, frames=frames), seed=0)
        geom = RectifiedGeometry.identity(truth.rig, truth.frames)
        settings = _suite_settings()
        tracks = track_sequence(truth.frames, geom, truth.queries, settings)
        return tracks.get("target_top"), truth.ground_truth.get("target_top"), settings.tracker

    def test_partial_occlusion_stays_visible(self):
        """Hidden from two of five cameras: visible throughout and within 3 sigma_s."""
        track, gt, cfg = self._track("cross_view", frames=4)
        assert np.all(track.visibility >= cfg.visibility_threshold)
        errors = np.linalg.norm(track.positions - gt.positions, axis=1)
        assert np.all(errors < 3.0 * cfg.sigma_spatial)

    def test_full_occlusion_drops_visibility_then_reacquires(self):
        """Swallowed by the sweeping box: not visible, then back within 2 cm."""
        track, gt, cfg = self._track("all_view", frames=20)
        assert track.query.t_q == 0
        assert np.all(track.visibility[11:15] < cfg.visibility_threshold)
        assert np.linalg.norm(track.positions[-1] - gt.positions[-1]) < 0.02
