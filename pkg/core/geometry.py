"""Pinhole cameras, rigid poses and per-frame point maps.

Conventions:
- Pixel centres sit at (column + 0.5, row + 0.5); depth is stored per integer
  (row, column).
- Poses are camera-to-room: X_room = R @ x_cam + t.
- A depth value is invalid when non-finite or <= 0.
- The global metric scale multiplies the room-frame point, translation included.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.spatial.transform import Rotation

from core.errors import InvalidDepthError, InvariantViolationError

# Points in camera or room frame are plain float arrays of shape (3,) or (N, 3)
Point3 = np.ndarray

BEHIND_CAMERA_EPS = 1e-6
ORTHONORMAL_TOL = 1e-9


def _frozen_array(values, dtype=np.float64, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise InvariantViolationError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        values = [float(v) for v in (self.fx, self.fy, self.cx, self.cy)]
        if not all(np.isfinite(values)):
            raise InvariantViolationError(f"intrinsics must be finite, got {values}")
        if values[0] <= 0 or values[1] <= 0:
            raise InvariantViolationError(
                f"focal lengths must be positive, got fx={values[0]}, fy={values[1]}"
            )
        for name, value in zip(("fx", "fy", "cx", "cy"), values):
            object.__setattr__(self, name, value)

    @property
    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "CameraIntrinsics":
        fx, fy, cx, cy = (float(v) for v in values)
        return cls(fx=fx, fy=fy, cx=cx, cy=cy)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera-to-room rigid transform [R | t].

    Args:
        r: 3x3 rotation, orthonormal with determinant +1
        t: translation in meters (camera centre in the room frame)
    """

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        r = _frozen_array(self.r, shape=(3, 3))
        t = _frozen_array(self.t, shape=(3,))
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvariantViolationError("pose contains non-finite values")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err > ORTHONORMAL_TOL:
            raise InvariantViolationError(f"rotation is not orthonormal (max error {err:.3e})")
        det = np.linalg.det(r)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise InvariantViolationError(f"rotation determinant is {det:.12f}, expected +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(r=np.eye(3), t=np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float], t: Sequence[float]) -> "CameraPose":
        """Build a pose from an axis-angle vector (radians) and translation."""
        return cls(r=Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix(), t=t)

    @classmethod
    def look_at(
        cls,
        position: Sequence[float],
        target: Sequence[float],
        up: Sequence[float] = (0.0, 0.0, 1.0),
    ) -> "CameraPose":
        """Camera at `position` with its optical axis (+z) towards `target`.

        Image x points right and image y points down, so the camera's y axis is
        aligned with -up.
        """
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise InvariantViolationError("look_at target coincides with camera position")
        forward /= norm
        right = np.cross(forward, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-12:
            raise InvariantViolationError("look_at up vector is parallel to the optical axis")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        r = np.column_stack([right, down, forward])
        # Re-orthonormalize to machine precision
        u, _, vt = np.linalg.svd(r)
        return cls(r=u @ vt, t=position)

    @property
    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.r).as_rotvec()

    @property
    def center(self) -> np.ndarray:
        return self.t

    @property
    def forward(self) -> np.ndarray:
        """Optical axis direction in the room frame."""
        return self.r[:, 2]

    def inverse(self) -> "CameraPose":
        return CameraPose(r=self.r.T, t=-self.r.T @ self.t)

    def compose(self, other: "CameraPose") -> "CameraPose":
        """Return self ∘ other (apply `other` first)."""
        return CameraPose(r=self.r @ other.r, t=self.r @ other.t + self.t)

    def transform(self, points: Point3) -> Point3:
        """Apply the transform to one point (3,) or a batch (N, 3)."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.r @ points + self.t
        return points @ self.r.T + self.t

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CameraPose):
            return NotImplemented
        return bool(np.array_equal(self.r, other.r) and np.array_equal(self.t, other.t))

    def __hash__(self) -> int:
        return hash((self.r.tobytes(), self.t.tobytes()))

    def __repr__(self) -> str:
        return f"CameraPose(rotvec={np.round(self.rotvec, 6).tolist()}, t={np.round(self.t, 6).tolist()})"


@dataclass(frozen=True)
class RigCalibration:
    """Per-view intrinsics and camera-to-room poses plus the global metric scale."""

    views: Tuple[Tuple[CameraIntrinsics, CameraPose], ...]
    scale: float = 1.0

    def __post_init__(self) -> None:
        views = tuple((k, p) for k, p in self.views)
        if len(views) < 2:
            raise InvariantViolationError(f"a rig needs at least 2 views, got {len(views)}")
        for k, p in views:
            if not isinstance(k, CameraIntrinsics) or not isinstance(p, CameraPose):
                raise InvariantViolationError("rig views must be (CameraIntrinsics, CameraPose)")
        scale = float(self.scale)
        if not np.isfinite(scale) or scale <= 0:
            raise InvariantViolationError(f"metric scale must be positive, got {scale}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "scale", scale)

    @property
    def num_views(self) -> int:
        return len(self.views)

    def intrinsics(self, v: int) -> CameraIntrinsics:
        return self.views[v][0]

    def pose(self, v: int) -> CameraPose:
        return self.views[v][1]

    def with_scale(self, scale: float) -> "RigCalibration":
        return RigCalibration(views=self.views, scale=scale)

    def transformed(self, g: CameraPose) -> "RigCalibration":
        """Apply a common rigid transform to every pose (g ∘ P_v)."""
        return RigCalibration(views=tuple((k, g.compose(p)) for k, p in self.views), scale=self.scale)

    def metric_pose(self, v: int) -> CameraPose:
        """Pose of view v in the metric room frame (translation multiplied by m)."""
        p = self.pose(v)
        return CameraPose(r=p.r, t=self.scale * p.t)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in meters; non-finite or <= 0 marks an invalid pixel."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self) -> None:
        width, height = int(self.width), int(self.height)
        if width <= 0 or height <= 0:
            raise InvariantViolationError(f"depth map must be non-empty, got {width}x{height}")
        data = np.asarray(self.data)
        if data.size != width * height:
            raise InvariantViolationError(
                f"depth data has {data.size} values, expected {width}x{height}={width * height}"
            )
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        data = _frozen_array(data.reshape(height, width), dtype=data.dtype)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "data", data)

    @property
    def valid_mask(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.data) & (self.data > 0)

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid_mask))

    def with_data(self, data: np.ndarray) -> "DepthMap":
        return DepthMap(width=self.width, height=self.height, data=data)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB image stored as (height, width, 3)."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self) -> None:
        width, height = int(self.width), int(self.height)
        if width <= 0 or height <= 0:
            raise InvariantViolationError(f"image must be non-empty, got {width}x{height}")
        data = np.asarray(self.data)
        if data.size != 3 * width * height:
            raise InvariantViolationError(
                f"rgb data has {data.size} values, expected 3x{width}x{height}"
            )
        data = _frozen_array(data.reshape(height, width, 3), dtype=np.uint8)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class MultiViewFrame:
    """Synchronized RGB and depth across all views at frame index t."""

    t: int
    views: Tuple[Tuple[RgbImage, DepthMap], ...]

    def __post_init__(self) -> None:
        views = tuple((rgb, depth) for rgb, depth in self.views)
        if not views:
            raise InvariantViolationError("a frame needs at least one view")
        for v, (rgb, depth) in enumerate(views):
            if (rgb.width, rgb.height) != (depth.width, depth.height):
                raise InvariantViolationError(
                    f"view {v}: rgb {rgb.width}x{rgb.height} does not match "
                    f"depth {depth.width}x{depth.height}"
                )
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "views", views)

    @property
    def num_views(self) -> int:
        return len(self.views)

    def rgb(self, v: int) -> RgbImage:
        return self.views[v][0]

    def depth(self, v: int) -> DepthMap:
        return self.views[v][1]

    def with_depths(self, depths: Sequence[DepthMap]) -> "MultiViewFrame":
        if len(depths) != self.num_views:
            raise InvariantViolationError(
                f"expected {self.num_views} depth maps, got {len(depths)}"
            )
        return MultiViewFrame(t=self.t, views=tuple((rgb, d) for (rgb, _), d in zip(self.views, depths)))


def backproject(
    k: CameraIntrinsics,
    u: Sequence[float],
    d: float,
    image_size: Optional[Tuple[int, int]] = None,
) -> Point3:
    """Lift pixel u with depth d to a camera-frame point.

    Args:
        k: Intrinsics
        u: Continuous pixel coordinate (u_x, u_y)
        d: Depth along the optical axis in meters
        image_size: Optional (width, height) bounds check

    Raises:
        InvalidDepthError: If d is non-finite or <= 0
        ValueError: If u lies outside image_size
    """
    d = float(d)
    if not np.isfinite(d) or d <= 0:
        raise InvalidDepthError(f"invalid depth {d!r}")
    ux, uy = float(u[0]), float(u[1])
    if image_size is not None:
        width, height = image_size
        if not (0 <= ux <= width and 0 <= uy <= height):
            raise ValueError(f"pixel ({ux}, {uy}) outside {width}x{height} image")
    return np.array([(ux - k.cx) / k.fx * d, (uy - k.cy) / k.fy * d, d])


def backproject_pixels(k: CameraIntrinsics, u: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Vectorized back-projection of (N, 2) pixels with (N,) depths; no validation."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.empty((u.shape[0], 3))
    out[:, 0] = (u[:, 0] - k.cx) / k.fx * d
    out[:, 1] = (u[:, 1] - k.cy) / k.fy * d
    out[:, 2] = d
    return out


def to_room(p: CameraPose, x: Point3) -> Point3:
    """Camera frame to room frame: R x + t."""
    return p.transform(x)


def metric_lift(m: float, x: Point3) -> Point3:
    """Scale a room-frame point by the global metric scale."""
    if m <= 0:
        raise InvariantViolationError(f"metric scale must be positive, got {m}")
    return m * np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class Projection:
    """Pixel coordinate and depth of a room point seen by one camera."""

    pixel: np.ndarray
    depth: float


def project(k: CameraIntrinsics, p: CameraPose, X: Point3) -> Optional[Projection]:
    """Project a room point into a camera.

    Returns:
        Projection, or None when the point is behind (or on) the camera plane
    """
    x_cam = p.r.T @ (np.asarray(X, dtype=float) - p.t)
    z = x_cam[2]
    if z <= BEHIND_CAMERA_EPS:
        return None
    pixel = np.array([k.fx * x_cam[0] / z + k.cx, k.fy * x_cam[1] / z + k.cy])
    return Projection(pixel=pixel, depth=float(z))


def project_points(
    k: CameraIntrinsics, p: CameraPose, X: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) room points.

    Returns:
        (pixels (N, 2), depths (N,), in_front mask (N,)); pixels of points
        behind the camera are NaN
    """
    x_cam = (np.asarray(X, dtype=float) - p.t) @ p.r
    z = x_cam[:, 2]
    in_front = z > BEHIND_CAMERA_EPS
    pixels = np.full((x_cam.shape[0], 2), np.nan)
    zf = z[in_front]
    pixels[in_front, 0] = k.fx * x_cam[in_front, 0] / zf + k.cx
    pixels[in_front, 1] = k.fy * x_cam[in_front, 1] / zf + k.cy
    return pixels, z, in_front


@dataclass(frozen=True, eq=False)
class PointMap:
    """Metric room-frame points of one frame with (view, row, col) provenance."""

    t: int
    points: np.ndarray
    provenance: np.ndarray
    per_view_counts: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def view_points(self, v: int) -> np.ndarray:
        return self.points[self.provenance[:, 0] == v]


def lift_depth_map(
    k: CameraIntrinsics,
    p: CameraPose,
    m: float,
    depth: DepthMap,
    stride: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Apply back-projection, room transform and metric lift to valid pixels.

    Args:
        stride: Keep every stride-th row and column, starting at (0, 0)

    Returns:
        (points (N, 3), pixel indices (N, 2) as (row, col)), in row-major order
    """
    mask = np.zeros((depth.height, depth.width), dtype=bool)
    mask[::stride, ::stride] = True
    mask &= depth.valid_mask
    rows, cols = np.nonzero(mask)
    d = depth.data[rows, cols].astype(np.float64)
    u = np.column_stack([cols + 0.5, rows + 0.5])
    points = metric_lift(m, to_room(p, backproject_pixels(k, u, d))) if rows.size else np.zeros((0, 3))
    return points, np.column_stack([rows, cols]).astype(np.int64)


def frame_point_map(
    f: MultiViewFrame,
    c: RigCalibration,
    depths: Optional[Sequence[DepthMap]] = None,
) -> PointMap:
    """Per-frame metric point map X_t: the union of every view's lifted pixels.

    Args:
        f: Multi-view frame
        c: Rig calibration (intrinsics, poses, metric scale)
        depths: Optional replacement depth maps (e.g. rectified depth)

    Returns:
        PointMap ordered by (view, row, column); empty (and logged) when every
        depth is invalid
    """
    if f.num_views != c.num_views:
        raise InvariantViolationError(
            f"frame has {f.num_views} views but calibration has {c.num_views}"
        )
    depth_maps = list(depths) if depths is not None else [f.depth(v) for v in range(f.num_views)]
    all_points: List[np.ndarray] = []
    all_prov: List[np.ndarray] = []
    counts: List[int] = []
    for v, depth in enumerate(depth_maps):
        pts, pix = lift_depth_map(c.intrinsics(v), c.pose(v), c.scale, depth)
        all_points.append(pts)
        all_prov.append(np.column_stack([np.full(len(pix), v, dtype=np.int64), pix]))
        counts.append(len(pts))
    points = np.concatenate(all_points) if all_points else np.zeros((0, 3))
    provenance = np.concatenate(all_prov) if all_prov else np.zeros((0, 3), dtype=np.int64)
    if points.shape[0] == 0:
        logger.warning(f"Frame {f.t}: no valid depth in any view, point map is empty")
    return PointMap(t=f.t, points=points, provenance=provenance, per_view_counts=tuple(counts))
