"""TAP-style tracking metrics on metric 3D trajectories.

Per-track quantities are computed over the frames t >= t_q and averaged
across tracks. A prediction counts as visible when v_t >= tau_v; a position
is within a threshold when its error is strictly below it.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import numpy as np
from loguru import logger

from core.errors import InvariantViolationError, UndefinedMetricError
from tracking.types import TrackSet

DEFAULT_THRESHOLDS = (0.01, 0.02, 0.04, 0.08, 0.16)


def _as_arrays(pred: np.ndarray, gt: np.ndarray, gt_vis: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    gt_vis = np.asarray(gt_vis, dtype=bool)
    if not (pred.shape[0] == gt.shape[0] == gt_vis.shape[0]):
        raise InvariantViolationError(
            f"length mismatch: {pred.shape[0]} predicted, {gt.shape[0]} ground truth, {gt_vis.shape[0]} visibility"
        )
    return pred, gt, gt_vis


def _check_thresholds(thresholds: Sequence[float]) -> np.ndarray:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size == 0 or np.any(np.diff(thresholds) <= 0):
        raise InvariantViolationError("thresholds must be non-empty and strictly ascending")
    return thresholds


def occlusion_accuracy(pred_vis: Sequence[float], gt_vis: Sequence[bool], tau_v: float = 0.5) -> float:
    """Percent of frames whose thresholded predicted visibility matches ground truth."""
    pred_vis = np.asarray(pred_vis, dtype=np.float64)
    gt_vis = np.asarray(gt_vis, dtype=bool)
    if pred_vis.shape != gt_vis.shape:
        raise InvariantViolationError(f"length mismatch: {pred_vis.size} predicted vs {gt_vis.size} ground truth")
    if pred_vis.size == 0:
        raise UndefinedMetricError("occlusion accuracy of an empty track")
    return float(100.0 * np.mean((pred_vis >= tau_v) == gt_vis))


def delta_avg(
    pred: np.ndarray,
    gt: np.ndarray,
    gt_vis: Sequence[bool],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> float:
    """Percent of GT-visible frames within each threshold, averaged over thresholds.

    Raises:
        UndefinedMetricError: If no frame is visible in the ground truth
    """
    pred, gt, gt_vis = _as_arrays(pred, gt, gt_vis)
    thresholds = _check_thresholds(thresholds)
    if not np.any(gt_vis):
        raise UndefinedMetricError("delta_avg needs at least one ground-truth visible frame")
    errors = np.linalg.norm(pred - gt, axis=1)[gt_vis]
    return float(100.0 * np.mean([np.mean(errors < th) for th in thresholds]))


def average_jaccard(
    pred: np.ndarray,
    gt: np.ndarray,
    pred_vis: Sequence[float],
    gt_vis: Sequence[bool],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    tau_v: float = 0.5,
) -> float:
    """TP / (TP + FP + FN) per threshold, averaged, in percent.

    Raises:
        UndefinedMetricError: If no frame is visible in the ground truth
    """
    pred, gt, gt_vis = _as_arrays(pred, gt, gt_vis)
    thresholds = _check_thresholds(thresholds)
    predicted = np.asarray(pred_vis, dtype=np.float64) >= tau_v
    if predicted.shape != gt_vis.shape:
        raise InvariantViolationError("predicted visibility length does not match the trajectory")
    if not np.any(gt_vis):
        raise UndefinedMetricError("average Jaccard needs at least one ground-truth visible frame")
    errors = np.linalg.norm(pred - gt, axis=1)
    scores = []
    for th in thresholds:
        within = errors < th
        tp = np.sum(predicted & gt_vis & within)
        fp = np.sum(predicted & (~gt_vis | ~within))
        fn = np.sum(gt_vis & (~predicted | ~within))
        scores.append(tp / (tp + fp + fn))
    return float(100.0 * np.mean(scores))


def median_trajectory_error(pred: np.ndarray, gt: np.ndarray, gt_vis: Sequence[bool]) -> float:
    """Median position error (meters) over GT-visible frames."""
    pred, gt, gt_vis = _as_arrays(pred, gt, gt_vis)
    if not np.any(gt_vis):
        raise UndefinedMetricError("median trajectory error needs at least one ground-truth visible frame")
    return float(np.median(np.linalg.norm(pred - gt, axis=1)[gt_vis]))


@dataclass(frozen=True)
class TrackEval:
    aj: float
    delta_avg: float
    oa: float
    mte: float
    thresholds: tuple
    num_tracks: int = 0
    missing: int = 0

    def as_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["thresholds"] = list(self.thresholds)
        return data

    def format(self) -> str:
        return (
            f"{'AJ':>8} {'d_avg':>8} {'OA':>8} {'MTE[m]':>10} {'tracks':>7}\n"
            f"{self.aj:8.2f} {self.delta_avg:8.2f} {self.oa:8.2f} {self.mte:10.4f} {self.num_tracks:7d}"
        )


def evaluate_tracks(
    pred: TrackSet,
    gt: TrackSet,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    tau_v: float = 0.5,
) -> TrackEval:
    """Average per-track metrics over every ground-truth track.

    Ground-truth visibility is read as v >= 0.5. Tracks whose evaluated frames
    have no ground-truth visible frame only contribute to OA. A ground-truth
    track without a prediction scores 0 for AJ, delta_avg and OA and is left
    out of MTE (inf when no track was predicted).

    Raises:
        UndefinedMetricError: If no track can be evaluated
    """
    if pred.num_frames != gt.num_frames:
        raise InvariantViolationError(f"prediction covers {pred.num_frames} frames, ground truth {gt.num_frames}")
    aj: List[float] = []
    da: List[float] = []
    oa: List[float] = []
    mte: List[float] = []
    missing = 0
    for gt_track in gt:
        pred_track = pred.get(gt_track.id)
        if pred_track is None:
            missing += 1
            oa.append(0.0)
            if np.any(gt_track.visibility >= 0.5):
                aj.append(0.0)
                da.append(0.0)
            continue
        offset = pred_track.query.t_q - gt_track.query.t_q
        if offset < 0:
            raise InvariantViolationError(f"track {gt_track.id!r} starts before its ground truth")
        gt_pos = gt_track.positions[offset:]
        gt_vis = gt_track.visibility[offset:] >= 0.5
        oa.append(occlusion_accuracy(pred_track.visibility, gt_vis, tau_v))
        if not np.any(gt_vis):
            continue
        aj.append(average_jaccard(pred_track.positions, gt_pos, pred_track.visibility, gt_vis, thresholds, tau_v))
        da.append(delta_avg(pred_track.positions, gt_pos, gt_vis, thresholds))
        mte.append(median_trajectory_error(pred_track.positions, gt_pos, gt_vis))
    if missing:
        logger.warning(f"{missing} ground-truth tracks have no prediction and score zero")
    if not aj:
        raise UndefinedMetricError("no track has a ground-truth visible frame to evaluate")
    return TrackEval(
        aj=float(np.mean(aj)),
        delta_avg=float(np.mean(da)),
        oa=float(np.mean(oa)),
        mte=float(np.mean(mte)) if mte else float("inf"),
        thresholds=tuple(float(t) for t in thresholds),
        num_tracks=len(oa),
        missing=missing,
    )
