"""Tests for cameras, poses, lifting and projection."""

import numpy as np
import pytest

from core.errors import InvalidDepthError, InvariantViolationError
from core.geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    MultiViewFrame,
    RgbImage,
    RigCalibration,
    backproject,
    frame_point_map,
    lift_depth_map,
    metric_lift,
    project,
    project_points,
)
from core.rng import make_rng


def _frame(width: int, height: int, depth: np.ndarray, views: int = 2) -> MultiViewFrame:
    rgb = RgbImage(width=width, height=height, data=np.zeros((height, width, 3), dtype=np.uint8))
    d = DepthMap(width=width, height=height, data=depth)
    return MultiViewFrame(t=0, views=tuple((rgb, d) for _ in range(views)))


class TestIntrinsics:
    """CameraIntrinsics validation."""

    def test_rejects_non_positive_focal(self):
        """Focal lengths must be positive."""
        with pytest.raises(InvariantViolationError):
            CameraIntrinsics(fx=0.0, fy=10.0, cx=1.0, cy=1.0)

    def test_rejects_non_finite(self):
        """NaN intrinsics are refused."""
        with pytest.raises(InvariantViolationError):
            CameraIntrinsics(fx=10.0, fy=10.0, cx=float("nan"), cy=1.0)

    def test_array_round_trip(self, intrinsics):
        """as_array and from_array are inverse."""
        assert CameraIntrinsics.from_array(intrinsics.as_array()) == intrinsics


class TestCameraPose:
    """Rigid transforms."""

    def test_rejects_non_orthonormal_rotation(self):
        """A scaled matrix is not a rotation."""
        with pytest.raises(InvariantViolationError):
            CameraPose(r=2 * np.eye(3), t=np.zeros(3))

    def test_rejects_reflection(self):
        """Determinant must be +1."""
        with pytest.raises(InvariantViolationError):
            CameraPose(r=np.diag([1.0, 1.0, -1.0]), t=np.zeros(3))

    def test_inverse_composes_to_identity(self):
        """P ∘ P^-1 is the identity."""
        pose = CameraPose.from_rotvec([0.1, -0.2, 0.3], [1.0, 2.0, 3.0])
        ident = pose.compose(pose.inverse())
        assert np.allclose(ident.r, np.eye(3), atol=1e-12)
        assert np.allclose(ident.t, 0.0, atol=1e-12)

    def test_look_at_points_optical_axis_at_target(self):
        """The camera's +z axis points at the target."""
        pose = CameraPose.look_at((3.0, 0.0, 2.0), (0.0, 0.0, 1.0))
        direction = np.array([-3.0, 0.0, -1.0]) / np.sqrt(10.0)
        assert np.allclose(pose.forward, direction, atol=1e-12)

    def test_look_at_rejects_parallel_up(self):
        """Looking straight down the up axis is undefined."""
        with pytest.raises(InvariantViolationError):
            CameraPose.look_at((0.0, 0.0, 2.0), (0.0, 0.0, 0.0))

    def test_pose_is_immutable(self):
        """Arrays are read-only."""
        pose = CameraPose.identity()
        with pytest.raises(ValueError):
            pose.t[0] = 1.0


class TestRigCalibration:
    """Rig invariants."""

    def test_requires_two_views(self, intrinsics):
        """A single camera is not a rig."""
        with pytest.raises(InvariantViolationError):
            RigCalibration(views=((intrinsics, CameraPose.identity()),))

    def test_rejects_non_positive_scale(self, two_view_rig):
        """The metric scale must be positive."""
        with pytest.raises(InvariantViolationError):
            two_view_rig.with_scale(0.0)

    def test_metric_pose_scales_translation(self, two_view_rig):
        """Only the translation is multiplied by m."""
        rig = two_view_rig.with_scale(2.0)
        assert np.allclose(rig.metric_pose(1).t, 2.0 * two_view_rig.pose(1).t)
        assert np.array_equal(rig.metric_pose(1).r, two_view_rig.pose(1).r)


class TestLifting:
    """Back-projection, metric lift and projection."""

    def test_principal_point_lifts_on_axis(self, intrinsics):
        """The principal point at depth d is (0, 0, d)."""
        x = backproject(intrinsics, (intrinsics.cx, intrinsics.cy), 2.5)
        assert np.allclose(x, [0.0, 0.0, 2.5])

    @pytest.mark.parametrize("d", [0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_depth_raises(self, intrinsics, d):
        """Non-positive or non-finite depth is refused."""
        with pytest.raises(InvalidDepthError):
            backproject(intrinsics, (1.0, 1.0), d)

    def test_pixel_outside_image_raises(self, intrinsics):
        """Bounds are checked when an image size is given."""
        with pytest.raises(ValueError):
            backproject(intrinsics, (100.0, 1.0), 1.0, image_size=(64, 48))

    def test_metric_lift_rejects_zero_scale(self):
        """m must be positive."""
        with pytest.raises(InvariantViolationError):
            metric_lift(0.0, np.ones(3))

    def test_project_inverts_lift(self, intrinsics):
        """Lifting then projecting returns the pixel and depth."""
        pose = CameraPose.from_rotvec([0.05, 0.1, -0.02], [0.3, -0.1, 1.2])
        u = np.array([12.25, 40.75])
        point = pose.transform(backproject(intrinsics, u, 3.0))
        projection = project(intrinsics, pose, point)
        assert np.allclose(projection.pixel, u, atol=1e-9)
        assert projection.depth == pytest.approx(3.0)

    def test_point_behind_camera_does_not_project(self, intrinsics):
        """Points with z <= 0 give None."""
        assert project(intrinsics, CameraPose.identity(), np.array([0.0, 0.0, -1.0])) is None

    def test_project_points_matches_scalar_projection(self, intrinsics):
        """The vectorized path agrees with project()."""
        pose = CameraPose.from_rotvec([0.0, 0.2, 0.0], [0.0, 0.0, -1.0])
        points = make_rng(0, "test", "points").uniform(-1, 1, size=(20, 3)) + [0.0, 0.0, 3.0]
        pixels, depths, in_front = project_points(intrinsics, pose, points)
        for i, point in enumerate(points):
            single = project(intrinsics, pose, point)
            assert in_front[i] == (single is not None)
            if single is not None:
                assert np.allclose(pixels[i], single.pixel)
                assert depths[i] == pytest.approx(single.depth)


class TestPointMap:
    """Per-frame point maps."""

    def test_invalid_pixels_are_skipped(self, two_view_rig):
        """NaN and zero depth produce no points."""
        depth = np.full((48, 64), 2.0)
        depth[0, 0] = np.nan
        depth[1, 1] = 0.0
        point_map = frame_point_map(_frame(64, 48, depth), two_view_rig)
        assert len(point_map) == 2 * (64 * 48 - 2)
        assert point_map.per_view_counts == (64 * 48 - 2, 64 * 48 - 2)

    def test_all_invalid_gives_empty_map(self, two_view_rig):
        """Every invalid depth is an empty point map, not an error."""
        point_map = frame_point_map(_frame(64, 48, np.zeros((48, 64))), two_view_rig)
        assert point_map.is_empty

    def test_provenance_matches_lifted_points(self, two_view_rig):
        """Each point comes from the pixel its provenance names."""
        depth = np.linspace(1.0, 4.0, 64 * 48).reshape(48, 64)
        point_map = frame_point_map(_frame(64, 48, depth), two_view_rig)
        v, row, col = point_map.provenance[100]
        k, pose = two_view_rig.intrinsics(v), two_view_rig.pose(v)
        expected = pose.transform(backproject(k, (col + 0.5, row + 0.5), depth[row, col]))
        assert np.allclose(point_map.points[100], expected)

    def test_frame_rig_mismatch_raises(self, two_view_rig):
        """The frame and the rig must have the same views."""
        with pytest.raises(InvariantViolationError):
            frame_point_map(_frame(64, 48, np.ones((48, 64)), views=3), two_view_rig)

    def test_stride_keeps_grid(self, intrinsics):
        """Stride 2 keeps every other row and column from (0, 0)."""
        depth = DepthMap(width=8, height=6, data=np.ones((6, 8)))
        points, pixels = lift_depth_map(intrinsics, CameraPose.identity(), 1.0, depth, stride=2)
        assert len(points) == 4 * 3
        assert set(pixels[:, 0]) == {0, 2, 4}
        assert set(pixels[:, 1]) == {0, 2, 4, 6}


class TestRng:
    """Counter-based random streams."""

    def test_same_stream_is_reproducible(self):
        """Same seed and stream give the same draws."""
        assert np.array_equal(make_rng(3, "a", 1).random(5), make_rng(3, "a", 1).random(5))

    def test_streams_are_independent(self):
        """Different stream names give different draws."""
        assert not np.array_equal(make_rng(3, "a").random(5), make_rng(3, "b").random(5))

    def test_negative_seed_rejected(self):
        """Seeds are non-negative."""
        with pytest.raises(ValueError):
            make_rng(-1)
