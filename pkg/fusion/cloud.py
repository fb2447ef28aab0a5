"""Fused metric feature clouds."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from core.errors import InvariantViolationError
from core.geometry import MultiViewFrame, lift_depth_map
from fusion.features import FEATURE_DIM, extract_features
from fusion.spatial_index import SpatialIndex
from rectification.geometry import RectifiedGeometry


@dataclass(frozen=True, eq=False)
class FusedCloud:
    """Room-frame points of every view with descriptors and (view, row, col) provenance."""

    t: int
    points: np.ndarray
    features: np.ndarray
    provenance: np.ndarray
    leaf_size: int = 16

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            features = features.reshape(points.shape[0], -1)
        provenance = np.asarray(self.provenance, dtype=np.int64).reshape(-1, 3)
        if provenance.shape[0] != points.shape[0] or features.shape[0] != points.shape[0]:
            raise InvariantViolationError(
                f"{points.shape[0]} points but {features.shape[0]} descriptors and "
                f"{provenance.shape[0]} provenance entries"
            )
        if not np.all(np.isfinite(points)):
            raise InvariantViolationError(f"frame {self.t}: fused cloud contains non-finite points")
        if points.shape[0] and not np.allclose(np.linalg.norm(features, axis=1), 1.0, atol=1e-6):
            raise InvariantViolationError(f"frame {self.t}: descriptors must have unit norm")
        for name, value in (("points", points), ("features", features), ("provenance", provenance)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def empty(cls, t: int, dim: int = FEATURE_DIM) -> "FusedCloud":
        return cls(t=t, points=np.zeros((0, 3)), features=np.zeros((0, dim)), provenance=np.zeros((0, 3)))

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def index(self) -> SpatialIndex:
        """kd-tree over the points, built on first use.

        Raises:
            EmptyCloudError: If the cloud is empty
        """
        return SpatialIndex(self.points, self.leaf_size)

    def knn(self, p: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.index.knn(p, k)


def _lift_view(
    frame: MultiViewFrame, geom: RectifiedGeometry, v: int, stride: int, patch_size: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rig = geom.rig
    points, pixels = lift_depth_map(
        rig.intrinsics(v), rig.pose(v), rig.scale, geom.rectified_depth(frame.t, v), stride
    )
    descriptors = extract_features(frame.rgb(v), patch_size)
    features = descriptors[pixels[:, 0], pixels[:, 1]] if len(pixels) else np.zeros((0, FEATURE_DIM))
    provenance = np.column_stack([np.full(len(pixels), v, dtype=np.int64), pixels])
    return points, features, provenance


def fuse_frame(
    frame: MultiViewFrame,
    geom: RectifiedGeometry,
    stride: int = 2,
    patch_size: int = 7,
    leaf_size: int = 16,
    threads: int = 1,
) -> FusedCloud:
    """Lift every stride-th valid pixel of every view into one metric feature cloud.

    Points use the rectified intrinsics, poses, scale and depth of `geom`.
    Output order is (view, row, column) ascending regardless of `threads`.

    Args:
        frame: Multi-view frame (RGB is used for descriptors)
        geom: Rectified geometry covering frame.t and all views
        stride: Pixel subsampling step

    Returns:
        FusedCloud; empty (and logged) if no view has valid depth
    """
    if stride < 1:
        raise InvariantViolationError(f"stride must be >= 1, got {stride}")
    if geom.num_views != frame.num_views:
        raise InvariantViolationError(
            f"geometry covers {geom.num_views} views, frame has {frame.num_views}"
        )
    if frame.t >= geom.num_frames:
        raise InvariantViolationError(f"geometry has no rectified depth for frame {frame.t}")
    views = range(frame.num_views)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts: List = list(pool.map(lambda v: _lift_view(frame, geom, v, stride, patch_size), views))
    else:
        parts = [_lift_view(frame, geom, v, stride, patch_size) for v in views]
    cloud = FusedCloud(
        t=frame.t,
        points=np.concatenate([p[0] for p in parts]),
        features=np.concatenate([p[1] for p in parts]),
        provenance=np.concatenate([p[2] for p in parts]),
        leaf_size=leaf_size,
    )
    if cloud.is_empty:
        logger.warning(f"Frame {frame.t}: fused cloud is empty")
    else:
        logger.debug(f"Frame {frame.t}: fused {len(cloud)} points from {frame.num_views} views")
    return cloud


def fuse_sequence(
    frames: List[MultiViewFrame],
    geom: RectifiedGeometry,
    stride: int = 2,
    patch_size: int = 7,
    leaf_size: int = 16,
    threads: int = 1,
    start: Optional[int] = None,
) -> List[FusedCloud]:
    """Clouds for every frame; frames before `start` are left empty."""
    clouds = []
    for frame in frames:
        if start is not None and frame.t < start:
            clouds.append(FusedCloud.empty(frame.t))
        else:
            clouds.append(fuse_frame(frame, geom, stride, patch_size, leaf_size, threads))
    logger.info(f"Fused {len(clouds)} frames, {sum(len(c) for c in clouds)} points in total")
    return clouds
