"""Cross-view depth reprojection residuals.

A sampled pixel of view v is lifted with its corrected depth, moved to the room
frame, projected into view w, and compared with view w's corrected depth,
bilinearly interpolated at the projected location. The raw arrays form the
inner loop of the rectifier; cross_view_residuals wraps them for typed inputs.

Interpolation is only trusted on cells whose surrounding 4 x 4 pixels lie on
one plane (inverse depth affine in the pixel coordinates); cells that straddle
a crease, a depth edge or a curved surface are not usable.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import InsufficientOverlapError, InvariantViolationError
from core.geometry import BEHIND_CAMERA_EPS, MultiViewFrame, RigCalibration
from rectification.sampling import SampleSet

MIN_USABLE_RESIDUALS = 6
# Planarity test of a cell's 4 x 4 window: deviation from the best affine fit of
# inverse depth allowed per unit of fitted slope, plus a floor relative to the level
PLANAR_SLOPE_TOLERANCE = 1e-3
PLANAR_LEVEL_TOLERANCE = 1e-6


def _affine_fit_operators() -> Tuple[np.ndarray, np.ndarray]:
    """(residual operator (16, 16), slope operator (2, 16)) of a 4 x 4 window."""
    rr, cc = np.mgrid[-1:3, -1:3]
    design = np.column_stack([np.ones(16), rr.ravel(), cc.ravel()]).astype(np.float64)
    solve = np.linalg.pinv(design)
    return np.eye(16) - design @ solve, solve[1:3]


_NON_AFFINE, _SLOPE = _affine_fit_operators()


@dataclass(frozen=True)
class ResidualSample:
    """One usable residual: pixel (u_x, u_y) of view `source` compared in view `target`."""

    source: int
    pixel: Tuple[float, float]
    target: int
    value: float

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise InvariantViolationError(f"residual compares view {self.source} with itself")
        if not np.isfinite(self.value):
            raise InvariantViolationError("residual value must be finite")


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Residual (meters) for every sample; NaN where the sample was not usable."""

    source: np.ndarray
    target: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    usable: np.ndarray

    @property
    def usable_values(self) -> np.ndarray:
        return self.values[self.usable]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.usable))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.usable_values)))

    @property
    def median_abs(self) -> float:
        return float(np.median(np.abs(self.usable_values)))

    def largest(self, n: int) -> List[ResidualSample]:
        """The n usable samples with the largest |residual|, largest first."""
        usable = np.flatnonzero(self.usable)
        order = usable[np.argsort(-np.abs(self.values[usable]), kind="stable")][: max(n, 0)]
        return [
            ResidualSample(
                source=int(self.source[i]),
                pixel=(float(self.cols[i]) + 0.5, float(self.rows[i]) + 0.5),
                target=int(self.target[i]),
                value=float(self.values[i]),
            )
            for i in order
        ]


def planar_cells(depth: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """(H, W) mask, True at (r, c) when the cell with top-left pixel (r, c) may be interpolated.

    The 4 x 4 window of pixels (r-1..r+2, c-1..c+2) must be valid and its
    inverse depth affine in (row, col): the largest deviation from the fitted
    plane stays within PLANAR_SLOPE_TOLERANCE times the fitted slope plus
    PLANAR_LEVEL_TOLERANCE times the mean inverse depth. Both tolerances are
    relative, so the mask does not change when the depth map is scaled.
    """
    height, width = depth.shape
    mask = np.zeros((height, width), dtype=bool)
    if height < 4 or width < 4:
        return mask
    inverse = np.where(valid, 1.0 / np.where(valid, depth, 1.0), np.nan)
    windows = sliding_window_view(inverse, (4, 4)).reshape(height - 3, width - 3, 16)
    deviation = np.abs(windows @ _NON_AFFINE.T).max(axis=-1)
    slope = np.abs(windows @ _SLOPE.T).sum(axis=-1)
    level = np.abs(windows).mean(axis=-1)
    with np.errstate(invalid="ignore"):
        planar = deviation <= PLANAR_SLOPE_TOLERANCE * slope + PLANAR_LEVEL_TOLERANCE * level
    mask[1 : height - 2, 1 : width - 2] = planar & np.isfinite(deviation)
    return mask


def bilinear(
    depth: np.ndarray,
    cells: np.ndarray,
    px: np.ndarray,
    py: np.ndarray,
    correction: Tuple[float, float] = (1.0, 0.0),
) -> Tuple[np.ndarray, np.ndarray]:
    """Interpolate corrected depth a * d + b at continuous pixel coordinates (pixel centres at +0.5).

    Inverse depth is interpolated, so the result is exact on planar surfaces.

    A location is usable only inside [0, W-1] x [0, H-1] in array coordinates
    when its cell is marked in `cells` (see planar_cells) and all four corrected
    corner depths are positive.

    Returns:
        (values, usable); values are NaN where unusable
    """
    height, width = depth.shape
    a, b = correction
    col = px - 0.5
    row = py - 0.5
    inside = np.isfinite(col) & np.isfinite(row) & (col >= 0) & (col <= width - 1) & (row >= 0) & (row <= height - 1)
    col = np.where(inside, col, 0.0)
    row = np.where(inside, row, 0.0)
    c0 = np.clip(np.floor(col).astype(np.int64), 0, max(width - 2, 0))
    r0 = np.clip(np.floor(row).astype(np.int64), 0, max(height - 2, 0))
    c1 = np.minimum(c0 + 1, width - 1)
    r1 = np.minimum(r0 + 1, height - 1)
    fc = col - c0
    fr = row - r0
    usable = inside & cells[r0, c0]
    corners = [np.where(usable, a * depth[r, c] + b, 1.0) for r, c in ((r0, c0), (r0, c1), (r1, c0), (r1, c1))]
    for corner in corners:
        usable &= corner > 0
    q00, q01, q10, q11 = (1.0 / np.where(usable, d, 1.0) for d in corners)
    top = q00 * (1 - fc) + q01 * fc
    bottom = q10 * (1 - fc) + q11 * fc
    values = np.where(usable, 1.0 / (top * (1 - fr) + bottom * fr), np.nan)
    return values, usable


def pair_residuals(
    k_src: np.ndarray,
    r_src: np.ndarray,
    t_src: np.ndarray,
    ab_src: Tuple[float, float],
    k_dst: np.ndarray,
    r_dst: np.ndarray,
    t_dst: np.ndarray,
    ab_dst: Tuple[float, float],
    depth_src: np.ndarray,
    depth_dst: np.ndarray,
    cells_dst: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals (working units) of one ordered pair on raw arrays.

    k_* are (fx, fy, cx, cy); depth_* are working depth before correction;
    cells_dst is planar_cells of the target depth.
    """
    fx, fy, cx, cy = k_src
    d = ab_src[0] * depth_src[rows, cols] + ab_src[1]
    x_cam = np.stack([(cols + 0.5 - cx) / fx * d, (rows + 0.5 - cy) / fy * d, d], axis=1)
    x_room = x_cam @ r_src.T + t_src
    x_dst = (x_room - t_dst) @ r_dst
    z = x_dst[:, 2]
    in_front = z > BEHIND_CAMERA_EPS
    safe_z = np.where(in_front, z, 1.0)
    px = np.where(in_front, k_dst[0] * x_dst[:, 0] / safe_z + k_dst[2], np.nan)
    py = np.where(in_front, k_dst[1] * x_dst[:, 1] / safe_z + k_dst[3], np.nan)
    target, usable = bilinear(depth_dst, cells_dst, px, py, (ab_dst[0], ab_dst[1]))
    usable &= in_front
    return np.where(usable, z - target, np.nan), usable


def cross_view_residuals(
    rig: RigCalibration,
    corrections: Sequence[Tuple[float, float]],
    frame: MultiViewFrame,
    samples: SampleSet,
    normalizers: Optional[Sequence[float]] = None,
) -> ResidualSet:
    """Reprojection residuals of every sample, in meters (m times working units).

    Occluded samples (target surface closer than the lifted point) stay in the
    set with their large residuals.

    Args:
        rig: Calibration whose translations are in the same units as the working depth
        corrections: Per-view (a_v, b_v)
        frame: Frame whose raw depth is corrected and compared
        samples: Sample pixels per ordered pair
        normalizers: Per-view n_v, working depth = raw / n_v (default 1)

    Raises:
        InsufficientOverlapError: If fewer than 6 samples are usable
    """
    normalizers = list(normalizers) if normalizers is not None else [1.0] * rig.num_views
    depths = [frame.depth(v).data.astype(np.float64) / normalizers[v] for v in range(frame.num_views)]
    cells = [planar_cells(depths[v], frame.depth(v).valid_mask) for v in range(frame.num_views)]
    ks = [rig.intrinsics(v).as_array() for v in range(rig.num_views)]
    out_src: List[np.ndarray] = []
    out_dst: List[np.ndarray] = []
    out_rows: List[np.ndarray] = []
    out_cols: List[np.ndarray] = []
    out_vals: List[np.ndarray] = []
    out_use: List[np.ndarray] = []
    for pair in samples.pairs:
        v, w = pair.source, pair.target
        pv, pw = rig.pose(v), rig.pose(w)
        values, usable = pair_residuals(
            ks[v], pv.r, pv.t, corrections[v],
            ks[w], pw.r, pw.t, corrections[w],
            depths[v], depths[w], cells[w],
            pair.rows, pair.cols,
        )
        out_src.append(np.full(len(pair), v))
        out_dst.append(np.full(len(pair), w))
        out_rows.append(pair.rows)
        out_cols.append(pair.cols)
        out_vals.append(rig.scale * values)
        out_use.append(usable)
    empty_i = np.zeros(0, dtype=np.int64)
    result = ResidualSet(
        source=np.concatenate(out_src) if out_src else empty_i,
        target=np.concatenate(out_dst) if out_dst else empty_i,
        rows=np.concatenate(out_rows) if out_rows else empty_i,
        cols=np.concatenate(out_cols) if out_cols else empty_i,
        values=np.concatenate(out_vals) if out_vals else np.zeros(0),
        usable=np.concatenate(out_use) if out_use else np.zeros(0, dtype=bool),
    )
    if result.count < MIN_USABLE_RESIDUALS:
        raise InsufficientOverlapError(
            f"only {result.count} usable cross-view residuals (need {MIN_USABLE_RESIDUALS})"
        )
    return result
