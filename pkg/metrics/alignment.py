"""Similarity alignment between reconstruction frames.

Used to compare rectified geometry with ground truth and to move queries
between the ground-truth frame and an estimated rig's frame.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from core.errors import DegenerateConfigurationError, InvariantViolationError
from core.geometry import RigCalibration
from tracking.types import Query

COLLINEAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """x -> scale * R x + t, with the RMS residual of the fit that produced it."""

    scale: float
    r: np.ndarray
    t: np.ndarray
    residual: float = 0.0

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(scale=1.0, r=np.eye(3), t=np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.r.T + self.t

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(
            scale=1.0 / self.scale,
            r=self.r.T,
            t=-(self.r.T @ self.t) / self.scale,
            residual=self.residual / self.scale,
        )

    def as_dict(self) -> dict:
        return {"scale": self.scale, "r": self.r.tolist(), "t": self.t.tolist(), "residual": self.residual}


def align_frames(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity with target ~ scale * R source + t (Umeyama).

    Raises:
        DegenerateConfigurationError: If fewer than 3 points or the source is collinear
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if source.shape != target.shape:
        raise InvariantViolationError(f"{source.shape[0]} source points but {target.shape[0]} target points")
    if source.shape[0] < 3:
        raise DegenerateConfigurationError(f"need at least 3 correspondences, got {source.shape[0]}")
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    xs = source - mu_s
    xt = target - mu_t
    spread = np.linalg.svd(xs, compute_uv=False)
    if spread[1] <= COLLINEAR_TOL * max(spread[0], 1e-300):
        raise DegenerateConfigurationError("source points are collinear; rotation about their line is undetermined")
    n = source.shape[0]
    cov = xt.T @ xs / n
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    r = u @ s @ vt
    var_s = np.sum(xs * xs) / n
    scale = float(np.trace(np.diag(d) @ s) / var_s)
    t = mu_t - scale * r @ mu_s
    fitted = scale * source @ r.T + t
    residual = float(np.sqrt(np.mean(np.sum((fitted - target) ** 2, axis=1))))
    return SimilarityTransform(scale=scale, r=r, t=t, residual=residual)


def rig_points(rig: RigCalibration) -> np.ndarray:
    """Camera centres plus a point along each camera axis, in the rig's metric frame.

    The axis points sit at the rig's median centre-to-centroid distance so that
    the point pattern scales with the rig.
    """
    poses = [rig.metric_pose(v) for v in range(rig.num_views)]
    centres = np.array([p.center for p in poses])
    length = float(np.median(np.linalg.norm(centres - centres.mean(axis=0), axis=1))) or 1.0
    points: List[np.ndarray] = []
    for pose in poses:
        points.append(pose.center)
        points.extend(pose.center + length * pose.r[:, i] for i in range(3))
    return np.array(points)


def rig_alignment(source_rig: RigCalibration, target_rig: RigCalibration) -> SimilarityTransform:
    """Similarity mapping the source rig's metric frame onto the target rig's."""
    if source_rig.num_views != target_rig.num_views:
        raise InvariantViolationError(
            f"rigs have {source_rig.num_views} and {target_rig.num_views} views"
        )
    return align_frames(rig_points(source_rig), rig_points(target_rig))


def transfer_queries(queries: Sequence[Query], transform: SimilarityTransform) -> List[Query]:
    return [Query(id=q.id, t_q=q.t_q, p_q=transform.apply(q.p_q)) for q in queries]
