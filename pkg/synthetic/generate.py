"""Render a SceneSpec into a full ground-truth sequence."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from loguru import logger

from core.geometry import MultiViewFrame, RigCalibration, project
from synthetic.render import cast, render_view
from synthetic.scene import AnchorSpec, SceneSpec
from tracking.types import Query, Track, TrackSet

VISIBILITY_TOLERANCE = 0.005


@dataclass(frozen=True)
class SyntheticSequence:
    """Frames, exact rig (m = 1), ground-truth tracks and the derived queries.

    Args:
        spec: Scene that produced the sequence
        frames: One MultiViewFrame per time step
        rig: Ground-truth calibration
        ground_truth: GT trajectories and 0/1 visibility, one track per anchor that
            is visible at least once, starting at its first visible frame
        queries: Query per ground-truth track (t_q = first visible frame)
        never_visible: Anchor ids that no camera sees in any frame
    """

    spec: SceneSpec
    frames: Tuple[MultiViewFrame, ...]
    rig: RigCalibration
    ground_truth: TrackSet
    queries: Tuple[Query, ...]
    never_visible: Tuple[str, ...] = ()

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_views(self) -> int:
        return self.rig.num_views


def rig_from_spec(spec: SceneSpec) -> RigCalibration:
    return RigCalibration(views=tuple((c.intrinsics, c.pose) for c in spec.cameras), scale=1.0)


def anchor_visible(spec: SceneSpec, anchor: AnchorSpec, t: int, seed: int = 0) -> bool:
    """Depth test: the anchor is unobstructed (within 5 mm) in at least one camera."""
    point = spec.anchor_position(anchor, t)
    for camera in spec.cameras:
        k, pose = camera.intrinsics, camera.pose
        projection = project(k, pose, point)
        if projection is None:
            continue
        ux, uy = projection.pixel
        if not (0 <= ux < camera.width and 0 <= uy < camera.height):
            continue
        ray = point - pose.t
        distance = float(np.linalg.norm(ray))
        s, _ = cast(spec, t, pose.t, ray[None, :], seed=seed)
        if (1.0 - s[0]) * distance <= VISIBILITY_TOLERANCE:
            return True
    return False


def ground_truth_tracks(spec: SceneSpec, seed: int = 0) -> Tuple[TrackSet, Tuple[str, ...]]:
    """GT trajectories/visibility for every anchor; never-visible anchors are flagged."""
    tracks: List[Track] = []
    never_visible: List[str] = []
    for anchor in spec.anchors:
        positions = np.array([spec.anchor_position(anchor, t) for t in range(spec.frames)])
        visible = np.array([anchor_visible(spec, anchor, t, seed) for t in range(spec.frames)], dtype=float)
        if not np.any(visible):
            logger.warning(f"Anchor '{anchor.id}' is never visible in any view; no query created")
            never_visible.append(anchor.id)
            continue
        t_q = int(np.argmax(visible > 0))
        query = Query(id=anchor.id, t_q=t_q, p_q=positions[t_q])
        tracks.append(Track(query=query, positions=positions[t_q:], visibility=visible[t_q:]))
    return TrackSet(num_frames=spec.frames, tracks=tuple(tracks)), tuple(never_visible)


def generate_scene(spec: SceneSpec, seed: int = 0, threads: int = 1) -> SyntheticSequence:
    """Render every (view, frame) and derive the ground truth.

    Args:
        spec: Scene specification
        seed: Texture seed; (spec, seed) determines the output bit for bit
        threads: Worker threads for per-view rendering

    Returns:
        SyntheticSequence with GT rig (m = 1), GT tracks and queries
    """
    logger.info(
        f"Generating scene '{spec.name}': {spec.num_views} views, {spec.frames} frames, "
        f"{len(spec.anchors)} anchors"
    )
    frames: List[MultiViewFrame] = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for t in range(spec.frames):
            views = list(pool.map(lambda v: render_view(spec, v, t, seed), range(spec.num_views)))
            frames.append(MultiViewFrame(t=t, views=tuple(views)))
    ground_truth, never_visible = ground_truth_tracks(spec, seed)
    queries = tuple(track.query for track in ground_truth)
    logger.info(f"Scene '{spec.name}': {len(queries)} queries, {len(never_visible)} never-visible anchors")
    return SyntheticSequence(
        spec=spec,
        frames=tuple(frames),
        rig=rig_from_spec(spec),
        ground_truth=ground_truth,
        queries=queries,
        never_visible=never_visible,
    )
