"""Occlusion-robust 3D point tracking over fused feature clouds.

Each frame the track predicts with constant velocity and refines by
feature-weighted mean-shift on its K nearest cloud points. Mean-shift drifts
towards a local density mode rather than staying on the queried point, so a
track follows that mode and reports it plus a fixed offset, measured once at
the query frame. The offset is corrected only for the mode shift caused by
updating the reference feature, which keeps a static point static.

Visibility is the best feature similarity among points within 3 sigma_s of
the refined mode; below the threshold the track coasts on its decaying
velocity and keeps its reference feature frozen. A visible step whose
displacement disagrees with the previous velocity by more than
velocity_gate * sigma_s keeps the previous velocity.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from config.settings import TrackerConfig
from core.errors import InvariantViolationError, IsolatedQueryError
from fusion.cloud import FusedCloud
from fusion.features import normalize_descriptors
from tracking.types import Query, Track, TrackSet, TrackState

MIN_WEIGHT_SUM = 1e-12
MIN_DISTANCE = 1e-12
SUPPORT_SIGMAS = 3.0
# Mean-shift to a mode stops when a step moves less than this (meters)
MODE_TOLERANCE = 1e-9
MODE_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class StepResult:
    position: np.ndarray
    visibility: float
    state: TrackState


def feature_similarity(features: np.ndarray, f_ref: np.ndarray, sigma_feature: float) -> np.ndarray:
    diff = features - f_ref
    return np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * sigma_feature**2))


def _visibility(cloud: FusedCloud, p: np.ndarray, f_ref: np.ndarray, cfg: TrackerConfig) -> Tuple[float, int]:
    """Best feature similarity within the geometric support of p, and its point index (-1 if none)."""
    idx, dist = cloud.knn(p, cfg.k)
    support = dist < SUPPORT_SIGMAS * cfg.sigma_spatial
    if not np.any(support):
        return 0.0, -1
    similarity = np.where(support, feature_similarity(cloud.features[idx], f_ref, cfg.sigma_feature), -1.0)
    best = int(np.argmax(similarity))
    return float(similarity[best]), int(idx[best])


def _shift(cloud: FusedCloud, p: np.ndarray, f_ref: np.ndarray, cfg: TrackerConfig) -> Optional[np.ndarray]:
    """One mean-shift update of p, None when every weight vanishes."""
    idx, dist = cloud.knn(p, cfg.k)
    weights = np.exp(-(dist**2) / (2.0 * cfg.sigma_spatial**2)) * feature_similarity(
        cloud.features[idx], f_ref, cfg.sigma_feature
    )
    total = weights.sum()
    if total < MIN_WEIGHT_SUM:
        return None
    return weights @ cloud.points[idx] / total


def refine(cloud: FusedCloud, p: np.ndarray, f_ref: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    """cfg.iterations mean-shift updates starting from p."""
    for _ in range(cfg.iterations):
        moved = _shift(cloud, p, f_ref, cfg)
        if moved is None:
            break
        p = moved
    return p


def settle(cloud: FusedCloud, p: np.ndarray, f_ref: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    """Mean-shift from p until it stops moving: the local mode for f_ref."""
    for _ in range(MODE_MAX_ITERATIONS):
        moved = _shift(cloud, p, f_ref, cfg)
        if moved is None:
            break
        done = float(np.linalg.norm(moved - p)) <= MODE_TOLERANCE
        p = moved
        if done:
            break
    return p


def init_track(q: Query, cloud: FusedCloud, cfg: TrackerConfig) -> TrackState:
    """Reference feature from the query's K nearest cloud points.

    f_ref is the inverse-distance weighted mean of their descriptors, renormalized.
    The offset is p_q minus the mode mean-shift reaches from p_q.

    Raises:
        IsolatedQueryError: If no cloud point lies within 3 sigma_s of p_q
    """
    limit = SUPPORT_SIGMAS * cfg.sigma_spatial
    if cloud.is_empty:
        raise IsolatedQueryError(q.id, float("inf"), limit)
    idx, dist = cloud.knn(q.p_q, cfg.k)
    if dist[0] > limit:
        raise IsolatedQueryError(q.id, float(dist[0]), limit)
    weights = 1.0 / np.maximum(dist, MIN_DISTANCE)
    f_ref = normalize_descriptors(weights @ cloud.features[idx] / weights.sum())
    mode = settle(cloud, q.p_q, f_ref, cfg)
    return TrackState(
        position=q.p_q.copy(),
        f_ref=f_ref,
        velocity=np.zeros(3),
        last_visible=q.t_q,
        offset=q.p_q - mode,
    )


def _coast(state: TrackState, cfg: TrackerConfig) -> StepResult:
    position = state.position + state.velocity
    new_state = TrackState(
        position=position,
        f_ref=state.f_ref,
        velocity=state.velocity * cfg.velocity_decay,
        last_visible=state.last_visible,
        offset=state.offset,
    )
    return StepResult(position=position, visibility=0.0, state=new_state)


def _gated_velocity(state: TrackState, displacement: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    if np.linalg.norm(displacement - state.velocity) > cfg.velocity_gate * cfg.sigma_spatial:
        return state.velocity
    return displacement


def step(state: TrackState, cloud: FusedCloud, cfg: TrackerConfig) -> StepResult:
    """Advance one frame: predict, refine by mean-shift, score visibility, accept or coast."""
    if cloud.is_empty:
        return _coast(state, cfg)
    p_prev = state.position
    mode = refine(cloud, p_prev - state.offset + state.velocity, state.f_ref, cfg)
    visibility, best = _visibility(cloud, mode, state.f_ref, cfg)
    if visibility < cfg.visibility_threshold:
        result = _coast(state, cfg)
        return StepResult(position=result.position, visibility=visibility, state=result.state)
    p = mode + state.offset
    blend = cfg.feature_blend
    f_ref = normalize_descriptors((1.0 - blend) * state.f_ref + blend * cloud.features[best])
    offset = state.offset
    if not np.array_equal(f_ref, state.f_ref):
        offset = offset + settle(cloud, mode, state.f_ref, cfg) - settle(cloud, mode, f_ref, cfg)
    new_state = TrackState(
        position=p,
        f_ref=f_ref,
        velocity=_gated_velocity(state, p - p_prev, cfg),
        last_visible=cloud.t,
        offset=offset,
    )
    return StepResult(position=p, visibility=visibility, state=new_state)


def track_query(q: Query, clouds: Sequence[FusedCloud], cfg: TrackerConfig) -> Track:
    """Run one query from t_q to the last cloud.

    Raises:
        IsolatedQueryError: If the query has no support at t_q
    """
    state = init_track(q, clouds[q.t_q], cfg)
    visibility, _ = _visibility(clouds[q.t_q], q.p_q, state.f_ref, cfg)
    positions = [q.p_q.copy()]
    visibilities = [visibility]
    for cloud in clouds[q.t_q + 1 :]:
        result = step(state, cloud, cfg)
        state = result.state
        positions.append(result.position)
        visibilities.append(result.visibility)
    return Track(query=q, positions=np.array(positions), visibility=np.clip(visibilities, 0.0, 1.0))


def _track_or_error(q: Query, clouds: Sequence[FusedCloud], cfg: TrackerConfig) -> Union[Track, str]:
    try:
        return track_query(q, clouds, cfg)
    except IsolatedQueryError as e:
        return str(e)


def track(
    clouds: Sequence[FusedCloud],
    queries: Sequence[Query],
    cfg: Optional[TrackerConfig] = None,
    threads: int = 1,
) -> TrackSet:
    """Track every query independently over the cloud sequence.

    Queries that fail to initialize are reported in TrackSet.errors; the rest are
    still tracked. Results do not depend on `threads`.
    """
    cfg = cfg or TrackerConfig()
    clouds = list(clouds)
    for q in queries:
        if q.t_q >= len(clouds):
            raise InvariantViolationError(f"query {q.id!r} starts at frame {q.t_q}, sequence has {len(clouds)}")
    for cloud in clouds:
        if not cloud.is_empty:
            cloud.index  # build once before sharing across threads
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes: List[Union[Track, str]] = list(pool.map(lambda q: _track_or_error(q, clouds, cfg), queries))
    else:
        outcomes = [_track_or_error(q, clouds, cfg) for q in queries]
    tracks = []
    errors = {}
    for q, outcome in zip(queries, outcomes):
        if isinstance(outcome, Track):
            tracks.append(outcome)
        else:
            logger.warning(outcome)
            errors[q.id] = outcome
    logger.info(f"Tracked {len(tracks)}/{len(queries)} queries over {len(clouds)} frames")
    return TrackSet(num_frames=len(clouds), tracks=tuple(tracks), errors=errors)
