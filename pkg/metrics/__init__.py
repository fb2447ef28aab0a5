"""Evaluation: tracking, depth and consistency metrics plus frame alignment."""

from metrics.alignment import SimilarityTransform, align_frames, rig_alignment, transfer_queries
from metrics.consistency import ConsistencyEval, consistency_eval, geometry_consistency
from metrics.depth import DepthEval, depth_eval, depth_eval_many
from metrics.tracking import (
    DEFAULT_THRESHOLDS,
    TrackEval,
    average_jaccard,
    delta_avg,
    evaluate_tracks,
    median_trajectory_error,
    occlusion_accuracy,
)

__all__ = [
    "DEFAULT_THRESHOLDS",
    "ConsistencyEval",
    "DepthEval",
    "SimilarityTransform",
    "TrackEval",
    "align_frames",
    "average_jaccard",
    "consistency_eval",
    "delta_avg",
    "depth_eval",
    "depth_eval_many",
    "evaluate_tracks",
    "geometry_consistency",
    "median_trajectory_error",
    "occlusion_accuracy",
    "rig_alignment",
    "transfer_queries",
]
