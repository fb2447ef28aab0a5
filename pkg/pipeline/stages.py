"""Pipeline stages: load, rectify, fuse, track, evaluate."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger

from config.settings import Settings
from core.errors import RigTrackError, UndefinedMetricError
from core.geometry import MultiViewFrame, RigCalibration
from fusion.cloud import FusedCloud, fuse_sequence
from metrics.alignment import SimilarityTransform, rig_alignment, transfer_queries
from metrics.consistency import geometry_consistency
from metrics.depth import depth_eval_many
from metrics.tracking import evaluate_tracks
from pipeline.base import Stage, StageChain, StagePriority, StageResult
from rectification.geometry import RectifiedGeometry
from rectification.hints import HintSet
from rectification.optimizer import rectify
from storage.sequence import LoadedSequence, load_sequence, save_rectified, save_tracks, write_report
from tracking.tracker import track
from tracking.types import Query, TrackSet


def rectify_sequence(
    frames: Sequence[MultiViewFrame], rig: RigCalibration, hints: Optional[str], settings: Settings
) -> RectifiedGeometry:
    """Rectify with hints taken from `rig`; with hints=None the rig and raw depth are used as they are."""
    if hints is None:
        return RectifiedGeometry.identity(rig, frames)
    hint_set = HintSet.from_flags(rig, hints)
    return rectify(frames[0], hint_set, frames, settings.rectifier)


def track_sequence(
    frames: Sequence[MultiViewFrame],
    geom: RectifiedGeometry,
    queries: Sequence[Query],
    settings: Settings,
    reference_rig: Optional[RigCalibration] = None,
) -> TrackSet:
    """Fuse every frame with `geom` and track the queries.

    Args:
        reference_rig: Rig whose frame the queries are given in. When set, queries
            are moved into the geometry's frame by rig alignment and the resulting
            trajectories are moved back.
    """
    transform = SimilarityTransform.identity()
    if reference_rig is not None:
        transform = rig_alignment(reference_rig, geom.rig)
        logger.debug(f"Query transfer: scale={transform.scale:.6f} residual={transform.residual:.3e}")
        queries = transfer_queries(queries, transform)
    start = min((q.t_q for q in queries), default=0)
    fusion = settings.fusion
    clouds = fuse_sequence(
        list(frames), geom, fusion.stride, fusion.patch_size, fusion.leaf_size, settings.threads, start=start
    )
    tracks = track(clouds, queries, settings.tracker, settings.threads)
    if reference_rig is not None:
        tracks = tracks.transformed(transform.inverse())
    return tracks


@dataclass
class PipelineContext:
    """Shared state passed through the stages of one run."""

    settings: Settings
    sequence_dir: Optional[Path] = None
    output_dir: Optional[Path] = None
    hints: Optional[str] = "rgb,k,pose,depth"
    align_to_reference: bool = True
    sequence: Optional[LoadedSequence] = None
    geometry: Optional[RectifiedGeometry] = None
    clouds: List[FusedCloud] = field(default_factory=list)
    tracks: Optional[TrackSet] = None
    report: Dict[str, Any] = field(default_factory=dict)


class LoadSequenceStage(Stage[PipelineContext]):
    def __init__(self) -> None:
        super().__init__("load", priority=StagePriority.CRITICAL)

    def run(self, context: PipelineContext) -> StageResult:
        if context.sequence is None:
            if context.sequence_dir is None:
                return StageResult(stage=self.name, success=False, message="no sequence", error="no sequence_dir given")
            context.sequence = load_sequence(context.sequence_dir)
        seq = context.sequence
        return StageResult(
            stage=self.name,
            success=True,
            message=f"{seq.num_frames} frames, {seq.num_views} views, {len(seq.queries)} queries",
        )


class RectifyStage(Stage[PipelineContext]):
    def __init__(self) -> None:
        super().__init__("rectify", priority=StagePriority.HIGH)
        self.register_dependency("load")

    def run(self, context: PipelineContext) -> StageResult:
        seq = context.sequence
        geom = rectify_sequence(seq.frames, seq.rig, context.hints, context.settings)
        context.geometry = geom
        consistency = geometry_consistency(
            geom, seq.frames[0], samples_per_pair=context.settings.rectifier.samples_per_pair, seed=context.settings.seed
        )
        context.report["rectification"] = {
            "hints": context.hints or "none",
            "converged": geom.converged,
            "scale": geom.scale,
            "scale_observable": geom.scale_observable,
            "iterations": geom.iterations,
            "consistency": consistency.as_dict(),
        }
        if context.output_dir is not None:
            save_rectified(context.output_dir / "rectified.json", geom, context.hints or "none", consistency.mean)
        return StageResult(
            stage=self.name,
            success=True,
            message=f"mean consistency {consistency.mean:.4f}, converged={geom.converged}",
            metrics={"consistency_mean": consistency.mean},
        )


class TrackStage(Stage[PipelineContext]):
    def __init__(self) -> None:
        super().__init__("track")
        self.register_dependency("rectify")

    def validate_config(self, context: PipelineContext) -> bool:
        return context.geometry is not None

    def run(self, context: PipelineContext) -> StageResult:
        seq = context.sequence
        reference = seq.rig if context.align_to_reference and context.hints is not None else None
        context.tracks = track_sequence(seq.frames, context.geometry, seq.queries, context.settings, reference)
        if context.output_dir is not None:
            save_tracks(context.output_dir / "tracks.json", context.tracks)
        return StageResult(
            stage=self.name,
            success=True,
            message=f"{len(context.tracks)} tracks, {len(context.tracks.errors)} failed queries",
        )


class EvaluateStage(Stage[PipelineContext]):
    def __init__(self) -> None:
        super().__init__("evaluate", priority=StagePriority.LOW)
        self.register_dependency("track")

    def run(self, context: PipelineContext) -> StageResult:
        seq = context.sequence
        cfg = context.settings
        if seq.ground_truth is not None:
            try:
                result = evaluate_tracks(
                    context.tracks, seq.ground_truth, cfg.evaluation.thresholds, cfg.tracker.visibility_threshold
                )
                context.report["tracking"] = result.as_dict()
            except UndefinedMetricError as e:
                logger.warning(f"Tracking metrics undefined: {e}")
        if context.geometry is not None and context.geometry.scale_observable:
            gt_depth = [d for frame in seq.gt_frames() for d in (frame.depth(v) for v in range(frame.num_views))]
            pred = [context.geometry.metric_depth(t, v) for t in range(seq.num_frames) for v in range(seq.num_views)]
            try:
                context.report["depth"] = depth_eval_many(pred, gt_depth).as_dict()
            except RigTrackError as e:
                logger.warning(f"Depth metrics undefined: {e}")
        if context.output_dir is not None:
            write_report(context.output_dir / "metrics.json", context.report)
        summary = ", ".join(sorted(k for k in context.report if k != "rectification")) or "nothing to evaluate"
        return StageResult(stage=self.name, success=True, message=f"evaluated {summary}", metrics=dict(context.report))


class FuseStage(Stage[PipelineContext]):
    """Debug stage: fuses the first frame only, for inspection (e.g. ORPC dumps)."""

    def __init__(self) -> None:
        super().__init__("fuse", priority=StagePriority.LOW)
        self.register_dependency("rectify")

    def run(self, context: PipelineContext) -> StageResult:
        seq = context.sequence
        fusion = context.settings.fusion
        context.clouds = fuse_sequence(
            list(seq.frames[:1]), context.geometry, fusion.stride, fusion.patch_size, fusion.leaf_size,
            context.settings.threads,
        )
        return StageResult(stage=self.name, success=True, message=f"{len(context.clouds[0])} points in frame 0")


def build_pipeline(include_fuse_dump: bool = False) -> StageChain[PipelineContext]:
    """Load -> rectify -> track -> evaluate (plus the optional fuse debug stage)."""
    chain: StageChain[PipelineContext] = StageChain()
    stages: List[Stage[PipelineContext]] = [LoadSequenceStage(), RectifyStage(), TrackStage(), EvaluateStage()]
    if include_fuse_dump:
        stages.append(FuseStage())
    for stage in stages:
        chain.register(stage)
    return chain
