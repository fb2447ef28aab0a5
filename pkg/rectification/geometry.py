"""Output of the rectification stage."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import InvariantViolationError
from core.geometry import DepthMap, MultiViewFrame, PointMap, RigCalibration, frame_point_map
from core.monitoring import OptimizationTrace

Correction = Tuple[float, float]


def correct_depth(depth: DepthMap, correction: Correction, normalizer: float = 1.0) -> DepthMap:
    """d~ = a * (d / n) + b on valid pixels; invalid pixels stay invalid."""
    a, b = correction
    valid = depth.valid_mask
    data = np.full(depth.data.shape, np.nan)
    data[valid] = a * (depth.data[valid].astype(np.float64) / normalizer) + b
    return depth.with_data(data)


def apply_corrections(
    frames: Sequence[MultiViewFrame],
    corrections: Sequence[Correction],
    normalizers: Sequence[float],
) -> Tuple[Tuple[DepthMap, ...], ...]:
    """Rectified depth D~_t^v for every frame, using the first-frame corrections."""
    return tuple(
        tuple(correct_depth(f.depth(v), corrections[v], normalizers[v]) for v in range(f.num_views))
        for f in frames
    )


@dataclass(frozen=True, eq=False)
class RectifiedGeometry:
    """Rectified rig (K~, P~, m) plus per-view depth correction and rectified depth.

    Depth and translations are in working units; the metric scale m converts
    both to meters. Working depth of view v is d / n_v.

    Args:
        rig: Rectified calibration including m
        corrections: Per-view (a_v, b_v), a_v > 0
        normalizers: Per-view n_v (1 for metric depth)
        per_frame_depth: D~ indexed [t][v]
        converged: False when the optimizer stopped on divergence or iteration limit
        scale_observable: False when no depth anchor fixed the metric scale
    """

    rig: RigCalibration
    corrections: Tuple[Correction, ...]
    normalizers: Tuple[float, ...]
    per_frame_depth: Tuple[Tuple[DepthMap, ...], ...]
    converged: bool = True
    scale_observable: bool = True
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    trace: Optional[OptimizationTrace] = None

    def __post_init__(self) -> None:
        v = self.rig.num_views
        corrections = tuple((float(a), float(b)) for a, b in self.corrections)
        normalizers = tuple(float(n) for n in self.normalizers)
        if len(corrections) != v or len(normalizers) != v:
            raise InvariantViolationError(f"expected {v} corrections and normalizers")
        for view, (a, b) in enumerate(corrections):
            if not (np.isfinite(a) and np.isfinite(b)) or a <= 0:
                raise InvariantViolationError(f"view {view}: depth correction a={a} must be positive and finite")
        if any(n <= 0 or not np.isfinite(n) for n in normalizers):
            raise InvariantViolationError("depth normalizers must be positive")
        for t, depths in enumerate(self.per_frame_depth):
            if len(depths) != v:
                raise InvariantViolationError(f"frame {t}: {len(depths)} depth maps for {v} views")
        object.__setattr__(self, "corrections", corrections)
        object.__setattr__(self, "normalizers", normalizers)
        object.__setattr__(self, "per_frame_depth", tuple(tuple(d) for d in self.per_frame_depth))

    @property
    def num_views(self) -> int:
        return self.rig.num_views

    @property
    def num_frames(self) -> int:
        return len(self.per_frame_depth)

    @property
    def scale(self) -> float:
        return self.rig.scale

    def rectified_depth(self, t: int, v: int) -> DepthMap:
        return self.per_frame_depth[t][v]

    def metric_depth(self, t: int, v: int) -> DepthMap:
        """m * D~ in meters."""
        depth = self.per_frame_depth[t][v]
        return depth.with_data(self.rig.scale * depth.data)

    def point_map(self, frame: MultiViewFrame) -> PointMap:
        return frame_point_map(frame, self.rig, self.per_frame_depth[frame.t])

    def with_frames(self, frames: Sequence[MultiViewFrame]) -> "RectifiedGeometry":
        """Re-apply the stored corrections to another depth sequence."""
        return RectifiedGeometry(
            rig=self.rig,
            corrections=self.corrections,
            normalizers=self.normalizers,
            per_frame_depth=apply_corrections(frames, self.corrections, self.normalizers),
            converged=self.converged,
            scale_observable=self.scale_observable,
            iterations=self.iterations,
            initial_cost=self.initial_cost,
            final_cost=self.final_cost,
            trace=self.trace,
        )

    @classmethod
    def identity(cls, rig: RigCalibration, frames: Sequence[MultiViewFrame]) -> "RectifiedGeometry":
        """Geometry that uses a rig and the raw depth as they are (ground truth or raw input)."""
        corrections = tuple((1.0, 0.0) for _ in range(rig.num_views))
        normalizers = tuple(1.0 for _ in range(rig.num_views))
        per_frame = tuple(tuple(f.depth(v) for v in range(f.num_views)) for f in frames)
        return cls(rig=rig, corrections=corrections, normalizers=normalizers, per_frame_depth=per_frame)
