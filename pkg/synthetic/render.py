"""Exact ray casting against closed-form primitives.

Rays are (origin, direction) with unnormalized directions; intersection
distances are expressed in units of the direction vector. Camera rays use
directions with camera-frame z = 1, so the hit distance is the pixel's depth.
"""

from typing import Optional, Tuple

import numpy as np

from core.geometry import CameraIntrinsics, CameraPose, DepthMap, RgbImage
from synthetic.scene import PrimitiveSpec, RoomSpec, SceneSpec
from synthetic.textures import shade

HIT_EPS = 1e-9


def _first_positive(near: np.ndarray, far: np.ndarray, hit: np.ndarray) -> np.ndarray:
    s = np.where(near > HIT_EPS, near, far)
    return np.where(hit & (s > HIT_EPS), s, np.inf)


def intersect_sphere(o: np.ndarray, d: np.ndarray, radius: float) -> np.ndarray:
    """Ray/sphere distances in the sphere's local frame (centre at origin)."""
    a = np.einsum("ij,ij->i", d, d)
    b = np.einsum("ij,ij->i", o, d)
    c = np.einsum("ij,ij->i", o, o) - radius * radius
    disc = b * b - a * c
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    return _first_positive((-b - root) / a, (-b + root) / a, hit)


def intersect_box(o: np.ndarray, d: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """Slab test against an axis-aligned box centred at the local origin."""
    h = np.asarray(half_extents, dtype=float)
    parallel = d == 0
    safe = np.where(parallel, 1.0, d)
    t1 = (-h - o) / safe
    t2 = (h - o) / safe
    inside = np.abs(o) <= h
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    near = tmin.max(axis=1)
    far = tmax.min(axis=1)
    return _first_positive(near, far, (near <= far) & (far > HIT_EPS))


def intersect_plane(o: np.ndarray, d: np.ndarray, half_size: Tuple[float, float]) -> np.ndarray:
    """Finite rectangle in the local xy-plane."""
    dz = d[:, 2]
    safe = np.where(dz == 0, 1.0, dz)
    s = -o[:, 2] / safe
    x = o[:, 0] + s * d[:, 0]
    y = o[:, 1] + s * d[:, 1]
    hit = (dz != 0) & (s > HIT_EPS) & (np.abs(x) <= half_size[0]) & (np.abs(y) <= half_size[1])
    return np.where(hit, s, np.inf)


def intersect_room(o: np.ndarray, d: np.ndarray, room: RoomSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Exit distance of rays starting inside the room box and the face axis hit."""
    bound = np.where(d > 0, room.upper, room.lower)
    safe = np.where(d == 0, 1.0, d)
    s_axis = np.where(d == 0, np.inf, (bound - o) / safe)
    face = np.argmin(s_axis, axis=1)
    s = s_axis[np.arange(len(s_axis)), face]
    return np.where(s > HIT_EPS, s, np.inf), face


def _surface_coords_primitive(primitive: PrimitiveSpec, local: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if primitive.kind == "plane":
        return local[:, 0], local[:, 1]
    if primitive.kind == "sphere":
        rho = primitive.radius
        azimuth = np.arctan2(local[:, 1], local[:, 0])
        elevation = np.arcsin(np.clip(local[:, 2] / rho, -1.0, 1.0))
        return rho * azimuth, rho * elevation
    h = np.asarray(primitive.half_extents)
    face = np.argmax(np.abs(local) / h, axis=1)
    sign = np.sign(local[np.arange(len(local)), face])
    offset = (2 * face + (sign > 0)) * 1.7
    a = local[np.arange(len(local)), (face + 1) % 3]
    b = local[np.arange(len(local)), (face + 2) % 3]
    return a + offset, b


def cast(
    scene: SceneSpec,
    t: int,
    origins: np.ndarray,
    dirs: np.ndarray,
    seed: int = 0,
    shade_hits: bool = False,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Nearest intersection of each ray with the scene at frame t.

    Args:
        scene: Scene specification
        t: Frame index (primitive motion)
        origins: Ray origins, (N, 3) or a single (3,) origin shared by all rays
        dirs: Ray directions (N, 3), not necessarily unit length
        seed: Texture seed
        shade_hits: Also return uint8 colors (N, 3) of the hit surfaces

    Returns:
        (distances (N,) with inf for no hit, colors or None)
    """
    dirs = np.asarray(dirs, dtype=float)
    n = dirs.shape[0]
    origins = np.broadcast_to(np.asarray(origins, dtype=float), (n, 3))
    best = np.full(n, np.inf)
    colors = np.zeros((n, 3), dtype=np.uint8) if shade_hits else None

    if scene.room is not None:
        s, face = intersect_room(origins, dirs, scene.room)
        best = s
        if shade_hits:
            hit = np.isfinite(s)
            p = origins[hit] + s[hit, None] * dirs[hit]
            f = face[hit]
            idx = np.arange(len(p))
            a = p[idx, (f + 1) % 3] + 10.0 * f
            b = p[idx, (f + 2) % 3] + 10.0 * (dirs[hit][idx, f] > 0)
            colors[hit] = shade(scene.room.texture, a, b, seed)

    for primitive in scene.primitives:
        pose = primitive.pose_at(t)
        local_o = (origins - pose.t) @ pose.r
        local_d = dirs @ pose.r
        if primitive.kind == "sphere":
            s = intersect_sphere(local_o, local_d, primitive.radius)
        elif primitive.kind == "box":
            s = intersect_box(local_o, local_d, np.asarray(primitive.half_extents))
        else:
            s = intersect_plane(local_o, local_d, primitive.half_extents[:2])
        closer = s < best
        if not np.any(closer):
            continue
        best = np.where(closer, s, best)
        if shade_hits:
            local = local_o[closer] + s[closer, None] * local_d[closer]
            a, b = _surface_coords_primitive(primitive, local)
            colors[closer] = shade(primitive.texture, a, b, seed, tint=primitive.tint)
    return best, colors


def camera_ray_directions(k: CameraIntrinsics, pose: CameraPose, width: int, height: int) -> np.ndarray:
    """Room-frame directions (H*W, 3) through pixel centres, with camera-frame z = 1."""
    cols, rows = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    d_cam = np.stack(
        [(cols.ravel() - k.cx) / k.fx, (rows.ravel() - k.cy) / k.fy, np.ones(width * height)], axis=1
    )
    return d_cam @ pose.r.T


def render_view(scene: SceneSpec, v: int, t: int, seed: int = 0) -> Tuple[RgbImage, DepthMap]:
    """Render the RGB image and exact depth of camera v at frame t.

    Pixels whose ray hits nothing get NaN depth and black color.
    """
    if not 0 <= v < scene.num_views:
        raise IndexError(f"view {v} out of range for {scene.num_views} cameras")
    if not 0 <= t < scene.frames:
        raise IndexError(f"frame {t} out of range for {scene.frames} frames")
    camera = scene.cameras[v]
    k, pose = camera.intrinsics, camera.pose
    dirs = camera_ray_directions(k, pose, camera.width, camera.height)
    s, colors = cast(scene, t, pose.t, dirs, seed=seed, shade_hits=True)
    depth = np.where(np.isfinite(s), s, np.nan).reshape(camera.height, camera.width)
    rgb = colors.reshape(camera.height, camera.width, 3)
    return (
        RgbImage(width=camera.width, height=camera.height, data=rgb),
        DepthMap(width=camera.width, height=camera.height, data=depth),
    )
