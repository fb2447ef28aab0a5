"""Calibrated noise for rigs and depth maps.

Every draw comes from a Philox stream keyed by (seed, "perturb", quantity, view),
so the perturbation of one camera does not depend on how many cameras the rig has.
"""

from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy.spatial.transform import Rotation

from core.geometry import CameraIntrinsics, CameraPose, DepthMap, MultiViewFrame, RigCalibration
from core.rng import make_rng


class PerturbationSpec(BaseModel):
    """Noise levels applied per camera."""

    rotation_deg: float = Field(default=0.0, ge=0, description="sigma_R, degrees")
    translation: float = Field(default=0.0, ge=0, description="sigma_t, meters")
    focal: float = Field(default=0.0, ge=0, description="sigma_f, relative")
    principal: float = Field(default=0.0, ge=0, description="sigma_c, pixels")
    depth_scale: float = Field(default=0.0, ge=0, description="sigma_a, relative")
    depth_offset: float = Field(default=0.0, ge=0, description="sigma_b, meters")
    seed: int = Field(default=0, ge=0)

    @classmethod
    def standard(cls, seed: int = 0) -> "PerturbationSpec":
        """Noise levels of the standard rectification suite."""
        return cls(
            rotation_deg=2.0,
            translation=0.05,
            focal=0.02,
            principal=0.0,
            depth_scale=0.02,
            depth_offset=0.01,
            seed=seed,
        )


def random_rotation(rng: np.random.Generator, sigma_rad: float) -> np.ndarray:
    """Rotation about a uniformly random axis by an angle |N(0, sigma)|."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = abs(rng.normal(0.0, 1.0)) * sigma_rad
    return Rotation.from_rotvec(axis * angle).as_matrix()


def perturb_calibration(rig: RigCalibration, p: PerturbationSpec) -> RigCalibration:
    """Apply rotation, translation, focal and principal-point noise to every camera.

    Rotation noise is composed on the camera side (R * dR). The metric scale is kept.
    """
    sigma_r = np.deg2rad(p.rotation_deg)
    views = []
    for v, (k, pose) in enumerate(rig.views):
        d_r = random_rotation(make_rng(p.seed, "perturb", "rotation", v), sigma_r)
        d_t = make_rng(p.seed, "perturb", "translation", v).normal(0.0, 1.0, 3) * p.translation
        focal = 1.0 + make_rng(p.seed, "perturb", "focal", v).normal(0.0, 1.0) * p.focal
        d_c = make_rng(p.seed, "perturb", "principal", v).normal(0.0, 1.0, 2) * p.principal
        r = pose.r @ d_r
        # Re-orthonormalize so repeated perturbation stays within pose tolerance
        u, _, vt = np.linalg.svd(r)
        views.append(
            (
                CameraIntrinsics(fx=k.fx * focal, fy=k.fy * focal, cx=k.cx + d_c[0], cy=k.cy + d_c[1]),
                CameraPose(r=r if p.rotation_deg == 0 else u @ vt, t=pose.t + d_t),
            )
        )
    logger.info(
        f"Perturbed {rig.num_views} cameras (sigma_R={p.rotation_deg} deg, sigma_t={p.translation} m, "
        f"sigma_f={p.focal}, sigma_c={p.principal} px, seed={p.seed})"
    )
    return RigCalibration(views=tuple(views), scale=rig.scale)


def depth_errors(num_views: int, p: PerturbationSpec) -> List[Tuple[float, float]]:
    """Per-view affine depth error (a_v, b_v) with d' = a_v * d + b_v."""
    errors = []
    for v in range(num_views):
        rng = make_rng(p.seed, "perturb", "depth", v)
        a = 1.0 + rng.normal(0.0, 1.0) * p.depth_scale
        b = rng.normal(0.0, 1.0) * p.depth_offset
        errors.append((float(a), float(b)))
    return errors


def perturb_depth(
    frames: Sequence[MultiViewFrame], p: PerturbationSpec
) -> Tuple[List[MultiViewFrame], List[Tuple[float, float]]]:
    """Apply the per-view affine depth error to every frame.

    Invalid pixels stay invalid; a pixel pushed to <= 0 becomes invalid.

    Returns:
        (perturbed frames, per-view (a_v, b_v))
    """
    if not frames:
        return [], []
    errors = depth_errors(frames[0].num_views, p)
    out = []
    for frame in frames:
        depths: List[DepthMap] = []
        for v, (a, b) in enumerate(errors):
            depth = frame.depth(v)
            data = np.where(depth.valid_mask, a * depth.data + b, depth.data)
            depths.append(depth.with_data(data))
        out.append(frame.with_depths(depths))
    logger.info(f"Perturbed depth of {len(frames)} frames (sigma_a={p.depth_scale}, sigma_b={p.depth_offset} m)")
    return out, errors
