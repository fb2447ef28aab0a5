"""Stage framework, pipeline stages and experiment drivers."""

from pipeline.base import Stage, StageChain, StageMetrics, StagePriority, StageResult, StageState
from pipeline.stages import PipelineContext, build_pipeline, rectify_sequence, track_sequence

__all__ = [
    "PipelineContext",
    "Stage",
    "StageChain",
    "StageMetrics",
    "StagePriority",
    "StageResult",
    "StageState",
    "build_pipeline",
    "rectify_sequence",
    "track_sequence",
]
