"""Queries, per-track state and track sets."""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import InvariantViolationError

if TYPE_CHECKING:
    from metrics.alignment import SimilarityTransform


def _readonly(values, shape_tail: Tuple[int, ...] = ()) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if shape_tail and arr.shape[1:] != shape_tail:
        raise InvariantViolationError(f"expected trailing shape {shape_tail}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Query:
    """A point to track: first observation frame and metric room position."""

    id: str
    t_q: int
    p_q: np.ndarray

    def __post_init__(self) -> None:
        p = _readonly(self.p_q)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise InvariantViolationError(f"query {self.id!r}: position must be 3 finite values")
        if int(self.t_q) < 0:
            raise InvariantViolationError(f"query {self.id!r}: t_q must be >= 0")
        object.__setattr__(self, "t_q", int(self.t_q))
        object.__setattr__(self, "p_q", p)


@dataclass
class TrackState:
    """Recurrent state of one track between frames.

    `offset` is the reported position minus the mean-shift mode the track follows.
    """

    position: np.ndarray
    f_ref: np.ndarray
    velocity: np.ndarray
    last_visible: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True, eq=False)
class Track:
    """Trajectory and visibility of one query from t_q to the last frame."""

    query: Query
    positions: np.ndarray
    visibility: np.ndarray

    def __post_init__(self) -> None:
        positions = _readonly(self.positions, (3,))
        visibility = _readonly(self.visibility)
        if positions.shape[0] != visibility.shape[0]:
            raise InvariantViolationError(
                f"track {self.query.id!r}: {positions.shape[0]} positions but "
                f"{visibility.shape[0]} visibility values"
            )
        if not np.all(np.isfinite(positions)):
            raise InvariantViolationError(f"track {self.query.id!r}: non-finite position")
        if np.any((visibility < 0) | (visibility > 1)) or not np.all(np.isfinite(visibility)):
            raise InvariantViolationError(f"track {self.query.id!r}: visibility outside [0, 1]")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "visibility", visibility)

    @property
    def id(self) -> str:
        return self.query.id

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.query.t_q, self.query.t_q + len(self.positions))

    def __len__(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class TrackSet:
    """All tracks of a sequence plus the queries that could not be tracked.

    Args:
        num_frames: Sequence length T
        tracks: One Track per successfully tracked query, in query order
        errors: Query id to error message for queries that failed to initialize
    """

    num_frames: int
    tracks: Tuple[Track, ...] = ()
    errors: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        tracks = tuple(self.tracks)
        for track in tracks:
            if track.query.t_q + len(track) != self.num_frames:
                raise InvariantViolationError(
                    f"track {track.id!r} covers frames {track.query.t_q}..{track.query.t_q + len(track) - 1}, "
                    f"expected through {self.num_frames - 1}"
                )
        object.__setattr__(self, "tracks", tracks)

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self) -> Iterator[Track]:
        return iter(self.tracks)

    @property
    def ids(self) -> List[str]:
        return [t.id for t in self.tracks]

    @property
    def queries(self) -> List[Query]:
        return [t.query for t in self.tracks]

    def get(self, query_id: str) -> Optional[Track]:
        for track in self.tracks:
            if track.id == query_id:
                return track
        return None

    def subset(self, ids: Sequence[str]) -> "TrackSet":
        wanted = set(ids)
        return TrackSet(
            num_frames=self.num_frames,
            tracks=tuple(t for t in self.tracks if t.id in wanted),
            errors={k: v for k, v in self.errors.items() if k in wanted},
        )

    def transformed(self, transform: "SimilarityTransform") -> "TrackSet":
        """Map every query and trajectory through a similarity transform."""
        tracks = []
        for track in self.tracks:
            q = track.query
            query = Query(id=q.id, t_q=q.t_q, p_q=transform.apply(q.p_q))
            tracks.append(Track(query=query, positions=transform.apply(track.positions), visibility=track.visibility))
        return TrackSet(num_frames=self.num_frames, tracks=tuple(tracks), errors=dict(self.errors))
