"""Metric 3D point tracking over fused feature clouds."""

from tracking.tracker import StepResult, init_track, step, track, track_query
from tracking.types import Query, Track, TrackSet, TrackState

__all__ = [
    "Query",
    "StepResult",
    "Track",
    "TrackSet",
    "TrackState",
    "init_track",
    "step",
    "track",
    "track_query",
]
