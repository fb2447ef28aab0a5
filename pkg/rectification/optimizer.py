"""Robust Levenberg-Marquardt rectification of a multi-view RGB-D rig.

Unknowns per view: intrinsics (fx, fy, cx, cy), a local pose increment
(axis-angle and body-frame translation) and a depth correction (a, b) with
d~ = a * d + b. View 0's pose and a_0 are fixed. The data term is the Huber
loss of cross-view reprojection residuals; hinted quantities add quadratic
priors. Samples whose residual is far outside the robust spread of the
current solution are dropped and the solve is repeated, for at most
`outlier_rounds` passes or until the selection stops changing. Target depth
is interpolated only inside locally planar cells. Without any depth hint the depth is only relative: each view is divided by
its median first-frame depth and the metric scale is left unobservable.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from loguru import logger
from scipy.spatial.transform import Rotation

from config.settings import RectifierConfig
from core.errors import InsufficientOverlapError, InvariantViolationError
from core.geometry import CameraIntrinsics, CameraPose, MultiViewFrame, RigCalibration
from core.monitoring import OptimizationTrace
from rectification.geometry import RectifiedGeometry, apply_corrections
from rectification.hints import HintSet
from rectification.residuals import MIN_USABLE_RESIDUALS, pair_residuals, planar_cells
from rectification.sampling import SampleSet, select_samples
from rectification.scale import recover_scale

PARAMS_PER_VIEW = 12
# Forward-difference steps: pixels for intrinsics, radians / working units otherwise
FD_STEPS = np.array([1e-4] * 4 + [1e-7] * 8)
GAUGE_FIXED = range(4, 11)
COST_FLOOR = 1e-24
PENALTY_FACTOR = 4.0
MAD_TO_SIGMA = 1.4826


def huber(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def huber_weights(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


@dataclass
class RigState:
    """Raw parameter arrays: k (V, 4), r (V, 3, 3), t (V, 3), ab (V, 2)."""

    k: np.ndarray
    r: np.ndarray
    t: np.ndarray
    ab: np.ndarray

    def apply(self, delta: np.ndarray) -> "RigState":
        """Apply per-view increments (V, 12): R <- R Exp(w), t <- t + R dt."""
        rot = Rotation.from_rotvec(delta[:, 4:7]).as_matrix()
        return RigState(
            k=self.k + delta[:, 0:4],
            r=self.r @ rot,
            t=self.t + np.einsum("vij,vj->vi", self.r, delta[:, 7:10]),
            ab=self.ab + delta[:, 10:12],
        )

    def stepped(self, v: int, j: int, h: float) -> "RigState":
        """Copy with a single parameter of view v incremented by h."""
        k, r, t, ab = self.k.copy(), self.r.copy(), self.t.copy(), self.ab.copy()
        if j < 4:
            k[v, j] += h
        elif j < 7:
            w = np.zeros(3)
            w[j - 4] = h
            r[v] = self.r[v] @ Rotation.from_rotvec(w).as_matrix()
        elif j < 10:
            e = np.zeros(3)
            e[j - 7] = h
            t[v] = self.t[v] + self.r[v] @ e
        else:
            ab[v, j - 10] += h
        return RigState(k=k, r=r, t=t, ab=ab)

    def to_rig(self, scale: float = 1.0, fixed_view0: Optional[CameraPose] = None) -> RigCalibration:
        views = []
        for v in range(self.k.shape[0]):
            if v == 0 and fixed_view0 is not None:
                pose = fixed_view0
            else:
                r = self.r[v]
                if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-12:
                    u, _, vt = np.linalg.svd(r)
                    r = u @ vt
                pose = CameraPose(r=r, t=self.t[v])
            views.append((CameraIntrinsics.from_array(self.k[v]), pose))
        return RigCalibration(views=tuple(views), scale=scale)


@dataclass(frozen=True)
class Initialization:
    state: RigState
    normalizers: Tuple[float, ...]
    unit: float
    metric: bool
    view0_pose: CameraPose
    hint_k: Tuple[Optional[np.ndarray], ...]
    hint_pose: Tuple[Optional[CameraPose], ...]


def rig_target_distance(poses: Sequence[CameraPose]) -> float:
    """Median distance from camera centres to the point nearest all optical axes."""
    a = np.zeros((3, 3))
    b = np.zeros(3)
    for pose in poses:
        d = pose.forward
        proj = np.eye(3) - np.outer(d, d)
        a += proj
        b += proj @ pose.center
    point = np.linalg.lstsq(a, b, rcond=None)[0]
    distance = float(np.median([np.linalg.norm(p.center - point) for p in poses]))
    return distance if distance > 0 else 1.0


def circle_poses(num_views: int, radius: float, height: float) -> List[CameraPose]:
    """Cameras on a horizontal circle looking at the room centre (origin)."""
    poses = []
    for v in range(num_views):
        angle = 2 * np.pi * v / num_views
        position = (radius * np.cos(angle), radius * np.sin(angle), height)
        poses.append(CameraPose.look_at(position, (0.0, 0.0, 0.0)))
    return poses


def initialize(frame: MultiViewFrame, hints: HintSet, cfg: RectifierConfig) -> Initialization:
    """Initial rig, working units and hint priors.

    Without a depth hint the working depth of view v is d / median(d) and
    translations are divided by a camera-to-target distance (of the pose hints
    if any, else of the initialization circle), so both share one unit.
    """
    num_views = frame.num_views
    metric = hints.any_depth
    if metric:
        normalizers = tuple(1.0 for _ in range(num_views))
    else:
        medians = []
        for v in range(num_views):
            depth = frame.depth(v)
            valid = depth.valid_mask
            if not np.any(valid):
                raise InsufficientOverlapError(f"view {v} has no valid depth in the first frame")
            medians.append(float(np.median(depth.data[valid])))
        normalizers = tuple(medians)

    hinted_poses = [h.pose for h in hints.views if h.pose is not None]
    if metric:
        unit = 1.0
    elif hinted_poses:
        unit = rig_target_distance(hinted_poses)
    else:
        unit = float(np.hypot(cfg.init_radius, cfg.init_height))

    def scaled(pose: CameraPose) -> CameraPose:
        return CameraPose(r=pose.r, t=pose.t / unit)

    circle = [scaled(p) for p in circle_poses(num_views, cfg.init_radius, cfg.init_height)]
    view0_hint = hints.views[0].pose
    g = scaled(view0_hint) if view0_hint is not None else CameraPose.identity()
    base = g.compose(circle[0].inverse())

    k = np.zeros((num_views, 4))
    r = np.zeros((num_views, 3, 3))
    t = np.zeros((num_views, 3))
    hint_k: List[Optional[np.ndarray]] = []
    hint_pose: List[Optional[CameraPose]] = []
    for v, hint in enumerate(hints.views):
        width, height = frame.depth(v).width, frame.depth(v).height
        if hint.intrinsics is not None:
            k[v] = hint.intrinsics.as_array()
            hint_k.append(hint.intrinsics.as_array())
        else:
            focal = cfg.init_focal_ratio * width
            k[v] = (focal, focal, width / 2, height / 2)
            hint_k.append(None)
        if hint.pose is not None:
            pose = scaled(hint.pose)
            hint_pose.append(pose)
        else:
            pose = g if v == 0 else base.compose(circle[v])
            hint_pose.append(None)
        r[v] = pose.r
        t[v] = pose.t
    ab = np.tile([1.0, 0.0], (num_views, 1))
    view0 = CameraPose(r=r[0], t=t[0])
    return Initialization(
        state=RigState(k=k, r=r, t=t, ab=ab),
        normalizers=normalizers,
        unit=unit,
        metric=metric,
        view0_pose=view0,
        hint_k=tuple(hint_k),
        hint_pose=tuple(hint_pose),
    )


class RectificationProblem:
    """Residuals, cost and forward-difference Jacobian over the free parameters."""

    def __init__(
        self,
        depths: Sequence[np.ndarray],
        cells: Sequence[np.ndarray],
        samples: SampleSet,
        init: Initialization,
        depth_hinted: Sequence[bool],
        cfg: RectifierConfig,
    ) -> None:
        self.depths = list(depths)
        self.cells = list(cells)
        self.pairs = samples.pairs
        self.delta = cfg.robust_delta
        self.outlier_floor = cfg.outlier_floor * cfg.robust_delta
        self.outlier_sigmas = cfg.outlier_sigmas
        self.penalty = PENALTY_FACTOR * cfg.robust_delta
        self.num_views = len(self.depths)
        self.free = [
            (v, j) for v in range(self.num_views) for j in range(PARAMS_PER_VIEW) if not (v == 0 and j in GAUGE_FIXED)
        ]
        self.view_pairs = [
            [i for i, p in enumerate(self.pairs) if v in (p.source, p.target)] for v in range(self.num_views)
        ]
        self.active: List[np.ndarray] = []
        self.offsets = np.zeros(1, dtype=np.int64)

        self.sqrt_lambda_k = np.sqrt(cfg.lambda_intrinsics)
        self.sqrt_lambda_pose = np.sqrt(cfg.lambda_pose)
        self.hint_k = init.hint_k
        self.hint_pose = init.hint_pose
        self.depth_factor: List[Optional[np.ndarray]] = []
        for v in range(self.num_views):
            if not depth_hinted[v]:
                self.depth_factor.append(None)
                continue
            rows, cols = samples.source_pixels(v)
            d = self.depths[v][rows, cols]
            moments = np.array([[np.sum(d * d), np.sum(d)], [np.sum(d), float(d.size)]])
            upper = scipy.linalg.cholesky(moments + 1e-12 * np.eye(2), lower=False)
            self.depth_factor.append(np.sqrt(cfg.lambda_depth) * upper)

    @property
    def num_free(self) -> int:
        return len(self.free)

    def _block(self, state: RigState, i: int) -> Tuple[np.ndarray, np.ndarray]:
        p = self.pairs[i]
        v, w = p.source, p.target
        return pair_residuals(
            state.k[v], state.r[v], state.t[v], state.ab[v],
            state.k[w], state.r[w], state.t[w], state.ab[w],
            self.depths[v], self.depths[w], self.cells[w],
            p.rows, p.cols,
        )

    def _effective(self, i: int, values: np.ndarray, usable: np.ndarray) -> np.ndarray:
        act = self.active[i]
        return np.where(usable[act], values[act], self.penalty)

    def select(self, state: RigState, threshold: Optional[float] = None) -> List[np.ndarray]:
        """Per-pair masks of the samples usable at `state` with |r| <= threshold."""
        masks = []
        for i in range(len(self.pairs)):
            values, usable = self._block(state, i)
            if threshold is not None:
                usable = usable & (np.abs(np.where(usable, values, 0.0)) <= threshold)
            masks.append(usable)
        return masks

    def outlier_threshold(self, state: RigState) -> float:
        """max(outlier_floor, outlier_sigmas * 1.4826 * median |r|) over the usable samples at `state`."""
        blocks = [self._block(state, i) for i in range(len(self.pairs))]
        pooled = np.abs(np.concatenate([values[usable] for values, usable in blocks])) if blocks else np.zeros(0)
        if pooled.size == 0:
            return self.outlier_floor
        return max(self.outlier_floor, self.outlier_sigmas * MAD_TO_SIGMA * float(np.median(pooled)))

    def activate(self, state: RigState, masks: Optional[List[np.ndarray]] = None) -> int:
        """Fix the sample set, by default to the samples usable at `state`.

        Raises:
            InsufficientOverlapError: If fewer than 6 samples are selected
        """
        masks = masks if masks is not None else self.select(state)
        sizes = [int(np.count_nonzero(a)) for a in masks]
        total = int(sum(sizes))
        if total < MIN_USABLE_RESIDUALS:
            raise InsufficientOverlapError(
                f"only {total} usable cross-view residuals (need {MIN_USABLE_RESIDUALS})"
            )
        self.active = masks
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        return total

    def evaluate(self, state: RigState) -> float:
        return self.cost(state, *self.residuals(state))

    def data(self, state: RigState) -> np.ndarray:
        blocks = [self._effective(i, *self._block(state, i)) for i in range(len(self.pairs))]
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def prior(self, state: RigState) -> np.ndarray:
        parts = []
        for v in range(self.num_views):
            if self.hint_k[v] is not None:
                parts.append(self.sqrt_lambda_k * (state.k[v] - self.hint_k[v]))
            hint = self.hint_pose[v]
            if hint is not None and v != 0:
                rotvec = Rotation.from_matrix(hint.r.T @ state.r[v]).as_rotvec()
                parts.append(self.sqrt_lambda_pose * np.concatenate([rotvec, hint.r.T @ (state.t[v] - hint.t)]))
            factor = self.depth_factor[v]
            if factor is not None:
                parts.append(factor @ np.array([state.ab[v, 0] - 1.0, state.ab[v, 1]]))
        return np.concatenate(parts) if parts else np.zeros(0)

    def residuals(self, state: RigState) -> Tuple[np.ndarray, np.ndarray]:
        return self.data(state), self.prior(state)

    def cost(self, state: RigState, r_data: np.ndarray, r_prior: np.ndarray) -> float:
        if np.any(state.ab[:, 0] <= 0) or np.any(state.k[:, 0:2] <= 0):
            return float("inf")
        if not (np.all(np.isfinite(r_data)) and np.all(np.isfinite(r_prior))):
            return float("inf")
        return float(np.sum(huber(r_data, self.delta)) + 0.5 * np.dot(r_prior, r_prior))

    def jacobian(
        self, state: RigState, r_data: np.ndarray, r_prior: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        j_data = np.zeros((r_data.size, self.num_free))
        j_prior = np.zeros((r_prior.size, self.num_free))
        for col, (v, j) in enumerate(self.free):
            h = FD_STEPS[j]
            stepped = state.stepped(v, j, h)
            for i in self.view_pairs[v]:
                lo, hi = self.offsets[i], self.offsets[i + 1]
                effective = self._effective(i, *self._block(stepped, i))
                j_data[lo:hi, col] = (effective - r_data[lo:hi]) / h
            if r_prior.size:
                j_prior[:, col] = (self.prior(stepped) - r_prior) / h
        return j_data, j_prior

    def apply(self, state: RigState, step: np.ndarray) -> RigState:
        delta = np.zeros((self.num_views, PARAMS_PER_VIEW))
        for value, (v, j) in zip(step, self.free):
            delta[v, j] = value
        return state.apply(delta)


@dataclass
class SolverResult:
    state: RigState
    initial_cost: float
    cost: float
    iterations: int
    converged: bool


def _solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(a, b, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError):
        return scipy.linalg.lstsq(a, b)[0]


def levenberg_marquardt(
    problem: RectificationProblem,
    state: RigState,
    cfg: RectifierConfig,
    trace: OptimizationTrace,
) -> SolverResult:
    """Damped Gauss-Newton on the IRLS-weighted normal equations.

    A trial step is accepted when it does not increase the robust cost, so the
    accepted cost sequence is non-increasing. The loop stops on a relative cost
    change below `tolerance` (converged), on `max_consecutive_rejections`
    rejected steps in a row (diverged), or after `max_iterations` trial steps.
    """
    r_data, r_prior = problem.residuals(state)
    cost = problem.cost(state, r_data, r_prior)
    initial_cost = cost
    if cost <= COST_FLOOR:
        logger.debug(f"Initial cost {cost:.3e} already at floor")
        return SolverResult(state=state, initial_cost=cost, cost=cost, iterations=0, converged=True)

    damping = cfg.initial_damping
    rejections = 0
    converged = False
    iteration = 0
    normal = gradient = scaling = None
    while iteration < cfg.max_iterations:
        if normal is None:
            j_data, j_prior = problem.jacobian(state, r_data, r_prior)
            weights = huber_weights(r_data, problem.delta)
            normal = j_data.T @ (weights[:, None] * j_data) + j_prior.T @ j_prior
            gradient = j_data.T @ (weights * r_data) + j_prior.T @ r_prior
            scaling = np.maximum(np.diag(normal), 1e-12)
        iteration += 1
        step = _solve(normal + damping * np.diag(scaling), -gradient)
        candidate = problem.apply(state, step)
        c_data, c_prior = problem.residuals(candidate)
        c_cost = problem.cost(candidate, c_data, c_prior)
        accepted = c_cost <= cost
        trace.record(iteration, c_cost, damping, accepted)
        if accepted:
            change = (cost - c_cost) / max(cost, COST_FLOOR)
            state, cost, r_data, r_prior = candidate, c_cost, c_data, c_prior
            damping *= cfg.damping_down
            rejections = 0
            normal = None
            if change < cfg.tolerance or cost <= COST_FLOOR:
                converged = True
                break
        else:
            if np.isfinite(c_cost) and c_cost - cost <= cfg.tolerance * cost:
                converged = True
                break
            damping *= cfg.damping_up
            rejections += 1
            if rejections >= cfg.max_consecutive_rejections:
                logger.warning(
                    f"Rectifier diverged: {rejections} consecutive rejected steps, keeping best cost {cost:.6e}"
                )
                break
    else:
        logger.warning(f"Rectifier stopped at max_iterations={cfg.max_iterations} before converging")
    return SolverResult(
        state=state, initial_cost=initial_cost, cost=cost, iterations=iteration, converged=converged
    )


def solve_with_outlier_rounds(
    problem: RectificationProblem,
    start: RigState,
    cfg: RectifierConfig,
    trace: OptimizationTrace,
) -> SolverResult:
    """Alternate LM solves with re-selection of the inlier samples.

    After each solve every sampled pixel is re-tested against the robust
    spread of the new residuals, so samples dropped earlier can come back.
    Both reported costs are measured on the final selection; a solution
    costlier than `start` there is replaced by `start` with converged False.
    """
    result = levenberg_marquardt(problem, start, cfg, trace)
    iterations = result.iterations
    for round_index in range(1, cfg.outlier_rounds):
        threshold = problem.outlier_threshold(result.state)
        masks = problem.select(result.state, threshold)
        if all(np.array_equal(a, b) for a, b in zip(masks, problem.active)):
            break
        try:
            kept = problem.activate(result.state, masks)
        except InsufficientOverlapError:
            logger.warning(f"Outlier round {round_index} would leave too few samples, keeping the previous set")
            break
        logger.debug(f"Outlier round {round_index}: {kept} samples within {threshold:.4f}")
        result = levenberg_marquardt(problem, result.state, cfg, trace)
        iterations += result.iterations

    initial_cost = problem.evaluate(start)
    final_cost = problem.evaluate(result.state)
    if not final_cost <= initial_cost:
        logger.warning(f"Rectified cost {final_cost:.6e} exceeds the initial {initial_cost:.6e}, keeping the initial rig")
        return SolverResult(
            state=start, initial_cost=initial_cost, cost=initial_cost, iterations=iterations, converged=False
        )
    return SolverResult(
        state=result.state,
        initial_cost=initial_cost,
        cost=final_cost,
        iterations=iterations,
        converged=result.converged,
    )


def rectify(
    first_frame: MultiViewFrame,
    hints: HintSet,
    depth_sequence: Optional[Sequence[MultiViewFrame]] = None,
    cfg: Optional[RectifierConfig] = None,
    samples: Optional[SampleSet] = None,
) -> RectifiedGeometry:
    """Fit a consistent rig to the first frame and rectify every frame's depth.

    Args:
        first_frame: Frame used for fitting
        hints: Optional per-view intrinsics, pose and depth hints
        depth_sequence: Frames whose depth is rectified (default: the first frame only)
        cfg: Rectifier configuration
        samples: Pre-selected samples (default: stratified selection with cfg.seed)

    Returns:
        RectifiedGeometry; `converged` is False if the optimizer diverged

    Raises:
        InsufficientOverlapError: If the views do not overlap enough
        InsufficientAnchorError: If depth hints leave < 100 anchor pixels
    """
    cfg = cfg or RectifierConfig()
    if hints.num_views != first_frame.num_views:
        raise InvariantViolationError(
            f"hints cover {hints.num_views} views, frame has {first_frame.num_views}"
        )
    frames = list(depth_sequence) if depth_sequence else [first_frame]
    logger.info(f"Rectifying {first_frame.num_views} views with inputs {hints.label}")

    init = initialize(first_frame, hints, cfg)
    depths = [
        first_frame.depth(v).data.astype(np.float64) / init.normalizers[v] for v in range(first_frame.num_views)
    ]
    cells = [planar_cells(depths[v], first_frame.depth(v).valid_mask) for v in range(first_frame.num_views)]
    if samples is None:
        samples = select_samples(first_frame, cfg.samples_per_pair, cfg.seed)
    depth_hinted = [h.has_depth for h in hints.views]
    problem = RectificationProblem(depths, cells, samples, init, depth_hinted, cfg)
    active = problem.activate(init.state)
    logger.debug(f"{active} active samples, {problem.num_free} free parameters")

    trace = OptimizationTrace()
    result = solve_with_outlier_rounds(problem, init.state, cfg, trace)
    rig = result.state.to_rig(scale=1.0, fixed_view0=init.view0_pose)
    corrections = tuple((float(a), float(b)) for a, b in result.state.ab)
    per_frame = apply_corrections(frames, corrections, init.normalizers)

    if init.metric:
        anchors = [frames[0].depth(v) if depth_hinted[v] else None for v in range(len(depth_hinted))]
        estimate = recover_scale(list(per_frame[0]), anchors)
    else:
        estimate = recover_scale(list(per_frame[0]), [None] * len(depth_hinted))
    rig = rig.with_scale(estimate.scale)

    logger.info(
        f"Rectification {'converged' if result.converged else 'did NOT converge'} after "
        f"{result.iterations} steps: cost {result.initial_cost:.6e} -> {result.cost:.6e}, m={estimate.scale:.6f}"
    )
    return RectifiedGeometry(
        rig=rig,
        corrections=corrections,
        normalizers=init.normalizers,
        per_frame_depth=per_frame,
        converged=result.converged,
        scale_observable=estimate.observable,
        iterations=result.iterations,
        initial_cost=result.initial_cost,
        final_cost=result.cost,
        trace=trace,
    )
