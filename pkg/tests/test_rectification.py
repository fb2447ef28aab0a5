"""Tests for hints, sampling, residuals, scale recovery and the LM rectifier."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from config.settings import RectifierConfig
from core.errors import InsufficientAnchorError, InsufficientOverlapError, InvariantViolationError
from core.geometry import CameraPose, DepthMap
from metrics.consistency import consistency_eval, geometry_consistency
from rectification.geometry import RectifiedGeometry, correct_depth
from rectification.hints import ABLATION_GRID, HintSet, grid_flags, grid_label, parse_hint_flags
from rectification.optimizer import (
    RigState,
    huber,
    huber_weights,
    initialize,
    rectify,
    rig_target_distance,
)
from rectification.residuals import bilinear, cross_view_residuals, planar_cells
from rectification.sampling import select_samples
from rectification.scale import MIN_ANCHOR_PIXELS, recover_scale
from synthetic.generate import generate_scene
from synthetic.perturb import PerturbationSpec, perturb_calibration, perturb_depth
from synthetic.scene import CameraSpec, RoomSpec, SceneSpec

SAMPLES = 128


def _config(**overrides) -> RectifierConfig:
    return RectifierConfig(samples_per_pair=SAMPLES, **overrides)


def _back_to_back() -> SceneSpec:
    """Two cameras at one spot facing opposite walls: no shared view."""
    cameras = [
        CameraSpec(position=(0.0, 0.0, 1.5), look_at=(1.0, 0.0, 1.5), width=16, height=12, fx=10.0, fy=10.0),
        CameraSpec(position=(0.0, 0.0, 1.5), look_at=(-1.0, 0.0, 1.5), width=16, height=12, fx=10.0, fy=10.0),
    ]
    return SceneSpec(name="back_to_back", room=RoomSpec(), cameras=cameras)


class TestHints:
    """Hint flags and the ablation grid."""

    def test_parse_flags(self):
        """Names are case- and space-insensitive."""
        assert parse_hint_flags("RGB, k ,depth") == (True, False, True)
        assert parse_hint_flags("rgb") == (False, False, False)

    def test_unknown_flag(self):
        """Unknown names raise ValueError."""
        with pytest.raises(ValueError):
            parse_hint_flags("rgb,lidar")

    def test_grid_labels_and_flags(self):
        """The grid has six rows from RGB only to RGB+K+Depth."""
        assert len(ABLATION_GRID) == 6
        assert grid_label(ABLATION_GRID[0]) == "RGB"
        assert grid_label(ABLATION_GRID[-1]) == "RGB+K+Depth"
        assert grid_flags(ABLATION_GRID[4]) == "rgb,k,pose,depth"

    def test_from_flags(self, two_view_rig):
        """Flags select which rig values become hints."""
        hints = HintSet.from_flags(two_view_rig, "rgb,pose")
        assert hints.label == "RGB+Pose"
        assert all(h.has_pose and not h.has_intrinsics and not h.has_depth for h in hints.views)

    def test_requires_two_views(self):
        """A hint set covers a rig."""
        with pytest.raises(InvariantViolationError):
            HintSet.rgb_only(1)


class TestDepthCorrection:
    """Affine depth correction."""

    def test_correction_keeps_invalid_pixels(self):
        """NaN and zero stay invalid; valid pixels get a * d / n + b."""
        depth = DepthMap(width=3, height=1, data=np.array([2.0, np.nan, 0.0]))
        corrected = correct_depth(depth, (1.5, 0.1), normalizer=2.0)
        assert corrected.data[0, 0] == pytest.approx(1.6)
        assert not corrected.valid_mask[0, 1:].any()

    def test_identity_geometry(self, room_sequence):
        """identity() keeps the raw depth and m = 1."""
        geom = RectifiedGeometry.identity(room_sequence.rig, room_sequence.frames)
        assert geom.scale == 1.0
        assert geom.rectified_depth(0, 0) is room_sequence.frames[0].depth(0)

    def test_rejects_non_positive_scale_factor(self, room_sequence):
        """a_v must be positive."""
        geom = RectifiedGeometry.identity(room_sequence.rig, room_sequence.frames)
        with pytest.raises(InvariantViolationError):
            RectifiedGeometry(
                rig=geom.rig,
                corrections=((0.0, 0.0),) + geom.corrections[1:],
                normalizers=geom.normalizers,
                per_frame_depth=geom.per_frame_depth,
            )


class TestSampling:
    """Stratified sample selection."""

    def test_pairs_and_bounds(self, room_sequence):
        """Every ordered pair gets at most N valid pixels."""
        frame = room_sequence.frames[0]
        samples = select_samples(frame, 50, seed=0)
        views = frame.num_views
        assert len(samples.pairs) == views * (views - 1)
        for pair in samples.pairs:
            assert 0 < len(pair) <= 50
            assert frame.depth(pair.source).valid_mask[pair.rows, pair.cols].all()

    def test_deterministic(self, room_sequence):
        """Same seed, same samples."""
        frame = room_sequence.frames[0]
        a = select_samples(frame, 40, seed=7)
        b = select_samples(frame, 40, seed=7)
        for pa, pb in zip(a.pairs, b.pairs):
            assert np.array_equal(pa.rows, pb.rows) and np.array_equal(pa.cols, pb.cols)


class TestResiduals:
    """Cross-view reprojection residuals."""

    def test_bilinear_exact_on_plane(self):
        """Inverse-depth interpolation reproduces a plane's depth exactly."""
        rows, cols = np.mgrid[0:6, 0:8] + 0.5
        inverse = 0.2 + 0.01 * cols - 0.02 * rows
        depth = 1.0 / inverse
        cells = planar_cells(depth, np.ones_like(depth, dtype=bool))
        values, usable = bilinear(depth, cells, np.array([3.3]), np.array([2.7]))
        assert usable[0]
        assert values[0] == pytest.approx(1.0 / (0.2 + 0.01 * 3.3 - 0.02 * 2.7), rel=1e-12)

    def test_bilinear_applies_correction(self):
        """Corners are corrected before interpolation."""
        depth = np.full((6, 6), 2.0)
        cells = planar_cells(depth, np.ones_like(depth, dtype=bool))
        values, usable = bilinear(depth, cells, np.array([3.0]), np.array([3.0]), (1.5, 0.25))
        assert usable[0]
        assert values[0] == pytest.approx(3.25, rel=1e-12)

    def test_bilinear_rejects_invalid_neighbour(self):
        """An invalid pixel in the 4 x 4 window makes the location unusable."""
        depth = np.ones((8, 8))
        valid = np.ones((8, 8), dtype=bool)
        valid[1, 1] = False
        cells = planar_cells(depth, valid)
        _, usable = bilinear(depth, cells, np.array([2.5, 5.0]), np.array([2.5, 5.0]))
        assert not usable[0] and usable[1]

    def test_planar_cells_reject_crease(self):
        """A fold in the surface disables the cells around it, at any depth scale."""
        cols = np.tile(np.arange(8, dtype=np.float64), (8, 1))
        depth = 1.0 / (0.2 + 0.05 * np.abs(cols - 3.0))
        valid = np.ones_like(depth, dtype=bool)
        cells = planar_cells(depth, valid)
        assert not cells[2, 2]
        assert cells[2, 4]
        assert not cells[0].any() and not cells[:, -2:].any()
        assert np.array_equal(planar_cells(3.7 * depth, valid), cells)

    def test_planar_cells_reject_curved_surface(self):
        """Inverse depth of a bowl is not affine."""
        rows, cols = np.mgrid[0:8, 0:8].astype(np.float64)
        depth = 2.0 + 0.05 * ((rows - 3.5) ** 2 + (cols - 3.5) ** 2)
        cells = planar_cells(depth, np.ones_like(depth, dtype=bool))
        assert not cells.any()

    def test_exact_rig_is_consistent(self, room_sequence):
        """Ground-truth calibration and depth give (near) zero residuals on every usable sample."""
        result = consistency_eval(
            room_sequence.rig, [(1.0, 0.0)] * room_sequence.num_views, room_sequence.frames[0],
            samples_per_pair=SAMPLES,
        )
        assert result.mean <= 1e-6
        assert result.count >= 6

    def test_common_rigid_motion_leaves_residuals_unchanged(self, room_sequence):
        """Moving every camera by the same rigid transform changes nothing."""
        rig = perturb_calibration(room_sequence.rig, PerturbationSpec(rotation_deg=1.0, translation=0.03, seed=4))
        frame = room_sequence.frames[0]
        samples = select_samples(frame, SAMPLES)
        ones = [(1.0, 0.0)] * rig.num_views
        g = CameraPose.from_rotvec((0.1, -0.2, 0.3), (0.5, -1.0, 0.25))
        base = cross_view_residuals(rig, ones, frame, samples)
        moved = cross_view_residuals(rig.transformed(g), ones, frame, samples)
        assert np.array_equal(base.usable, moved.usable)
        assert np.allclose(moved.usable_values, base.usable_values, rtol=0.0, atol=1e-9)

    def test_largest_orders_by_magnitude(self, room_sequence):
        """largest(n) lists the worst usable samples first."""
        rig = perturb_calibration(room_sequence.rig, PerturbationSpec.standard(seed=0))
        frame = room_sequence.frames[0]
        residuals = cross_view_residuals(rig, [(1.0, 0.0)] * rig.num_views, frame, select_samples(frame, SAMPLES))
        worst = residuals.largest(5)
        magnitudes = [abs(s.value) for s in worst]
        assert len(worst) == 5
        assert magnitudes == sorted(magnitudes, reverse=True)
        assert magnitudes[0] == pytest.approx(float(np.max(np.abs(residuals.usable_values))))
        assert all(s.source != s.target for s in worst)
        assert residuals.largest(0) == []

    def test_perturbed_rig_is_inconsistent(self, room_sequence):
        """Calibration noise shows up as reprojection error."""
        rig = perturb_calibration(room_sequence.rig, PerturbationSpec.standard(seed=0))
        result = consistency_eval(
            rig, [(1.0, 0.0)] * rig.num_views, room_sequence.frames[0], samples_per_pair=SAMPLES
        )
        assert result.median > 1e-3

    def test_residuals_scale_with_metric_scale(self, room_sequence):
        """Residuals are reported in meters: m times working units."""
        rig = perturb_calibration(room_sequence.rig, PerturbationSpec(translation=0.05, seed=2))
        frame = room_sequence.frames[0]
        samples = select_samples(frame, SAMPLES)
        ones = [(1.0, 0.0)] * rig.num_views
        base = cross_view_residuals(rig, ones, frame, samples)
        doubled = cross_view_residuals(rig.with_scale(2.0), ones, frame, samples)
        assert np.allclose(doubled.usable_values, 2.0 * base.usable_values)

    def test_no_overlap_raises(self):
        """Views that share nothing cannot be compared."""
        seq = generate_scene(_back_to_back())
        with pytest.raises(InsufficientOverlapError):
            consistency_eval(seq.rig, [(1.0, 0.0)] * 2, seq.frames[0], samples_per_pair=64)


class TestScale:
    """Metric scale from anchor depth."""

    def test_recovers_ratio(self):
        """Anchor = 2 x unscaled gives m = 2."""
        unscaled = DepthMap(width=20, height=10, data=np.full((10, 20), 1.5))
        anchor = unscaled.with_data(unscaled.data * 2.0)
        estimate = recover_scale([unscaled, unscaled], [anchor, None])
        assert estimate.observable
        assert estimate.scale == pytest.approx(2.0)
        assert estimate.pixel_count == 200

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0, 3.0])
    def test_median_ignores_outliers(self, s):
        """unscaled = anchor / s with 10% garbage pixels still gives m = s."""
        rng = np.random.default_rng(5)
        anchor_data = rng.uniform(1.0, 4.0, size=(20, 20))
        unscaled_data = anchor_data / s
        outliers = rng.choice(anchor_data.size, size=40, replace=False)
        unscaled_data.flat[outliers] = rng.uniform(0.1, 10.0, size=40)
        unscaled = DepthMap(width=20, height=20, data=unscaled_data)
        estimate = recover_scale([unscaled], [unscaled.with_data(anchor_data)])
        assert estimate.scale == pytest.approx(s, rel=1e-6)

    def test_no_anchor_is_unobservable(self):
        """Without anchors m = 1 and the scale is flagged unobservable."""
        unscaled = DepthMap(width=20, height=10, data=np.ones((10, 20)))
        estimate = recover_scale([unscaled, unscaled], [None, None])
        assert estimate.scale == 1.0
        assert not estimate.observable

    def test_too_few_anchor_pixels(self):
        """Fewer than 100 jointly valid pixels is an error."""
        data = np.full((10, 10), np.nan)
        data.flat[: MIN_ANCHOR_PIXELS - 1] = 1.0
        unscaled = DepthMap(width=10, height=10, data=data)
        with pytest.raises(InsufficientAnchorError):
            recover_scale([unscaled, unscaled], [unscaled, None])


class TestOptimizerPieces:
    """Loss, parameter updates and initialization."""

    def test_huber(self):
        """Quadratic inside delta, linear and continuous outside."""
        r = np.array([0.0, 0.05, 0.2, -0.2])
        assert np.allclose(huber(r, 0.05), [0.0, 0.00125, 0.05 * 0.175, 0.05 * 0.175])
        assert np.allclose(huber_weights(r, 0.05), [1.0, 1.0, 0.25, 0.25])

    def test_zero_increment_is_identity(self, room_sequence):
        """Applying a zero update keeps the state."""
        init = initialize(room_sequence.frames[0], HintSet.from_rig(room_sequence.rig), _config())
        state = init.state.apply(np.zeros((room_sequence.num_views, 12)))
        assert np.allclose(state.r, init.state.r)
        assert np.allclose(state.t, init.state.t)

    def test_translation_increment_is_body_frame(self):
        """t <- t + R dt."""
        r = np.array([[[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
        state = RigState(k=np.ones((1, 4)), r=r, t=np.zeros((1, 3)), ab=np.array([[1.0, 0.0]]))
        moved = state.stepped(0, 7, 0.5)
        assert np.allclose(moved.t[0], [0.0, 0.5, 0.0])

    def test_rig_target_distance(self, room_sequence):
        """Ring cameras are sqrt(3^2 + 1.4^2) m from the shared target."""
        poses = [room_sequence.rig.pose(v) for v in range(room_sequence.num_views)]
        assert rig_target_distance(poses) == pytest.approx(np.hypot(3.0, 1.4), rel=1e-9)

    def test_metric_initialization_uses_hints(self, room_sequence):
        """With depth hints the working unit is the meter and hints are the start."""
        init = initialize(room_sequence.frames[0], HintSet.from_rig(room_sequence.rig), _config())
        assert init.metric and init.unit == 1.0
        assert init.normalizers == (1.0,) * room_sequence.num_views
        assert np.allclose(init.state.t[2], room_sequence.rig.pose(2).t)

    def test_relative_initialization_normalizes_depth(self, room_sequence):
        """Without depth hints each view is divided by its median depth."""
        frame = room_sequence.frames[0]
        hints = HintSet.from_rig(room_sequence.rig, depth=False)
        init = initialize(frame, hints, _config())
        assert not init.metric
        assert init.normalizers[0] == pytest.approx(float(np.median(frame.depth(0).data)))


class TestRectify:
    """End-to-end rectification."""

    @pytest.fixture(scope="class")
    def noisy(self, room_sequence):
        p = PerturbationSpec(rotation_deg=1.0, translation=0.03, focal=0.01, depth_scale=0.02, depth_offset=0.01, seed=3)
        frames, _ = perturb_depth(room_sequence.frames, p)
        return perturb_calibration(room_sequence.rig, p), frames

    def test_reduces_inconsistency(self, room_sequence):
        """Under the standard noise the mean reprojection error drops 20-fold to under 2 cm."""
        p = PerturbationSpec.standard(seed=1)
        frames, _ = perturb_depth(room_sequence.frames, p)
        rig = perturb_calibration(room_sequence.rig, p)
        before = geometry_consistency(RectifiedGeometry.identity(rig, frames), frames[0], samples_per_pair=SAMPLES)
        geom = rectify(frames[0], HintSet.from_rig(rig), frames, _config())
        after = geometry_consistency(geom, frames[0], samples_per_pair=SAMPLES)
        assert after.mean <= before.mean / 20.0
        assert after.mean <= 0.02
        assert geom.scale_observable

    def test_recovers_relative_poses(self, room_sequence):
        """Pose noise of 2 deg / 5 cm is undone to within 0.2 deg / 5 mm relative to view 0."""
        truth = room_sequence.rig
        rig = perturb_calibration(truth, PerturbationSpec(rotation_deg=2.0, translation=0.05, seed=5))
        frame = room_sequence.frames[0]
        geom = rectify(frame, HintSet.from_rig(rig), cfg=_config())
        m = geom.scale
        estimated0 = geom.rig.pose(0)
        for v in range(1, truth.num_views):
            relative = estimated0.inverse().compose(geom.rig.pose(v))
            expected = truth.pose(0).inverse().compose(truth.pose(v))
            angle = np.rad2deg(Rotation.from_matrix(expected.r.T @ relative.r).magnitude())
            assert angle <= 0.2
            assert np.linalg.norm(m * relative.t - expected.t) <= 5e-3

    def test_accepted_costs_never_increase(self, noisy):
        """Within one solve the trace's accepted costs are non-increasing."""
        rig, frames = noisy
        geom = rectify(frames[0], HintSet.from_rig(rig), frames, _config(max_iterations=15, outlier_rounds=1))
        costs = geom.trace.accepted_costs
        assert all(b <= a for a, b in zip(costs, costs[1:]))
        assert geom.final_cost <= geom.initial_cost

    def test_outlier_rounds_never_end_costlier(self, noisy):
        """Re-selecting inliers still reports a final cost no higher than the start."""
        rig, frames = noisy
        geom = rectify(frames[0], HintSet.from_rig(rig), frames, _config(max_iterations=15, outlier_rounds=3))
        assert geom.final_cost <= geom.initial_cost
        assert np.isfinite(geom.final_cost)

    def test_view0_pose_is_fixed(self, noisy):
        """View 0 keeps its hinted pose."""
        rig, frames = noisy
        geom = rectify(frames[0], HintSet.from_rig(rig), frames, _config(max_iterations=5))
        assert np.allclose(geom.rig.pose(0).r, rig.pose(0).r)
        assert np.allclose(geom.rig.pose(0).t, rig.pose(0).t)

    def test_rigid_pose_prior_pins_hints(self, noisy):
        """An overwhelming pose prior keeps every hinted pose."""
        rig, frames = noisy
        geom = rectify(frames[0], HintSet.from_rig(rig), frames, _config(max_iterations=10, lambda_pose=1e14))
        for v in range(rig.num_views):
            assert np.allclose(geom.rig.pose(v).r, rig.pose(v).r, rtol=0.0, atol=1e-9)
            assert np.allclose(geom.rig.pose(v).t, rig.pose(v).t, rtol=0.0, atol=1e-9)

    def test_exact_input_stays_put(self, room_sequence):
        """Ground-truth inputs are already a minimum: nothing moves."""
        frame = room_sequence.frames[0]
        geom = rectify(frame, HintSet.from_rig(room_sequence.rig), cfg=_config(max_iterations=10))
        for v in range(room_sequence.num_views):
            assert np.allclose(geom.rig.pose(v).r, room_sequence.rig.pose(v).r, rtol=0.0, atol=1e-9)
            assert np.allclose(geom.rig.pose(v).t, room_sequence.rig.pose(v).t, rtol=0.0, atol=1e-9)
        assert geom.corrections[1] == pytest.approx((1.0, 0.0), abs=1e-9)
        assert geom.scale == pytest.approx(1.0, abs=1e-9)

    def test_without_depth_scale_is_unobservable(self, room_sequence):
        """Without a depth hint m = 1 and the scale is flagged unobservable."""
        frame = room_sequence.frames[0]
        hints = HintSet.from_rig(room_sequence.rig, depth=False)
        geom = rectify(frame, hints, cfg=_config(max_iterations=5))
        assert not geom.scale_observable
        assert geom.scale == 1.0

    def test_hint_count_mismatch(self, room_sequence, two_view_rig):
        """Hints must cover every view of the frame."""
        with pytest.raises(InvariantViolationError):
            rectify(room_sequence.frames[0], HintSet.from_rig(two_view_rig))
