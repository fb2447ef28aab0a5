"""Pydantic models for the JSON documents of a sequence directory."""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.geometry import CameraIntrinsics, CameraPose, RigCalibration
from tracking.types import Query, Track, TrackSet

FORMAT_VERSION = 1

Vec3 = Tuple[float, float, float]
Mat3 = Tuple[Vec3, Vec3, Vec3]


class IntrinsicsDoc(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float


class PoseDoc(BaseModel):
    """Camera-to-room rotation (row-major) and translation."""

    r: Mat3
    t: Vec3


class ViewCalibrationDoc(BaseModel):
    intrinsics: IntrinsicsDoc
    pose: PoseDoc


class CalibrationDoc(BaseModel):
    scale: float = Field(default=1.0, gt=0)
    views: List[ViewCalibrationDoc] = Field(min_length=2)

    @classmethod
    def from_rig(cls, rig: RigCalibration) -> "CalibrationDoc":
        views = []
        for v in range(rig.num_views):
            k, pose = rig.intrinsics(v), rig.pose(v)
            views.append(
                ViewCalibrationDoc(
                    intrinsics=IntrinsicsDoc(fx=k.fx, fy=k.fy, cx=k.cx, cy=k.cy),
                    pose=PoseDoc(r=tuple(map(tuple, pose.r.tolist())), t=tuple(pose.t.tolist())),
                )
            )
        return cls(scale=rig.scale, views=views)

    def to_rig(self) -> RigCalibration:
        """Build the rig; type invariants (e.g. orthonormal rotations) are checked here."""
        views = tuple(
            (
                CameraIntrinsics(fx=v.intrinsics.fx, fy=v.intrinsics.fy, cx=v.intrinsics.cx, cy=v.intrinsics.cy),
                CameraPose(r=np.array(v.pose.r), t=np.array(v.pose.t)),
            )
            for v in self.views
        )
        return RigCalibration(views=views, scale=self.scale)


class ViewInfo(BaseModel):
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class SequenceManifest(BaseModel):
    version: int = FORMAT_VERSION
    name: str = ""
    num_frames: int = Field(ge=1)
    views: List[ViewInfo] = Field(min_length=2)
    has_gt_depth: bool = False


class QueryDoc(BaseModel):
    id: str
    t_q: int = Field(ge=0)
    p_q: Vec3

    @classmethod
    def from_query(cls, q: Query) -> "QueryDoc":
        return cls(id=q.id, t_q=q.t_q, p_q=tuple(q.p_q.tolist()))

    def to_query(self) -> Query:
        return Query(id=self.id, t_q=self.t_q, p_q=np.array(self.p_q))


class QueriesDoc(BaseModel):
    queries: List[QueryDoc] = Field(default_factory=list)

    @classmethod
    def from_queries(cls, queries: Sequence[Query]) -> "QueriesDoc":
        return cls(queries=[QueryDoc.from_query(q) for q in queries])

    def to_queries(self) -> List[Query]:
        return [q.to_query() for q in self.queries]


class TrackDoc(BaseModel):
    query: QueryDoc
    positions: List[Vec3]
    visibility: List[float]


class TrackSetDoc(BaseModel):
    num_frames: int = Field(ge=1)
    tracks: List[TrackDoc] = Field(default_factory=list)
    errors: Dict[str, str] = Field(default_factory=dict)

    @classmethod
    def from_track_set(cls, track_set: TrackSet) -> "TrackSetDoc":
        return cls(
            num_frames=track_set.num_frames,
            tracks=[
                TrackDoc(
                    query=QueryDoc.from_query(t.query),
                    positions=[tuple(p) for p in t.positions.tolist()],
                    visibility=t.visibility.tolist(),
                )
                for t in track_set
            ],
            errors=dict(track_set.errors),
        )

    def to_track_set(self) -> TrackSet:
        tracks = tuple(
            Track(query=t.query.to_query(), positions=np.array(t.positions).reshape(-1, 3), visibility=np.array(t.visibility))
            for t in self.tracks
        )
        return TrackSet(num_frames=self.num_frames, tracks=tracks, errors=dict(self.errors))


class RectifiedDoc(BaseModel):
    hints: str
    calibration: CalibrationDoc
    corrections: List[Tuple[float, float]]
    normalizers: List[float]
    converged: bool
    scale_observable: bool
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    mean_consistency: Optional[float] = None
