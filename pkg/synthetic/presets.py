"""Ready-made scenes: the rectification suite, the tracking scene and occlusion scenes."""

from typing import List, Literal, Sequence, Tuple

import numpy as np

from synthetic.scene import AnchorSpec, CameraSpec, MotionSpec, PrimitiveSpec, RoomSpec, SceneSpec

FOCAL_RATIO = 0.8
TARGET_TINT = (0.95, 0.35, 0.3)
OCCLUDER_TINT = (0.3, 0.45, 0.95)


def ring_cameras(
    num_views: int = 5,
    radius: float = 3.0,
    height: float = 2.2,
    target: Tuple[float, float, float] = (0.0, 0.0, 0.8),
    width: int = 640,
    height_px: int = 480,
    focal_ratio: float = FOCAL_RATIO,
) -> List[CameraSpec]:
    """Cameras evenly spaced on a horizontal circle, all looking at `target`."""
    cameras = []
    for v in range(num_views):
        angle = 2 * np.pi * v / num_views
        position = (radius * float(np.cos(angle)), radius * float(np.sin(angle)), height)
        cameras.append(
            CameraSpec(
                position=position,
                look_at=target,
                width=width,
                height=height_px,
                fx=focal_ratio * width,
                fy=focal_ratio * width,
            )
        )
    return cameras


def _furniture() -> List[PrimitiveSpec]:
    return [
        PrimitiveSpec(id="table", kind="box", center=(0.0, 0.0, 0.4), half_extents=(0.6, 0.4, 0.4), texture=1),
        PrimitiveSpec(
            id="cabinet",
            kind="box",
            center=(-1.6, 1.3, 0.6),
            rotation=(0.0, 0.0, 0.4),
            half_extents=(0.3, 0.25, 0.6),
            texture=2,
        ),
        PrimitiveSpec(id="lamp", kind="sphere", center=(1.3, 1.2, 0.35), radius=0.35, texture=3),
    ]


def room_scene(
    width: int = 640, height: int = 480, num_views: int = 5, frames: int = 1, name: str = "room"
) -> SceneSpec:
    """Empty textured room, used for rectification experiments.

    Every surface point seen by two cameras is seen by both unobstructed.
    """
    return SceneSpec(
        name=name,
        room=RoomSpec(size=(8.0, 8.0, 3.0), texture=0),
        cameras=ring_cameras(num_views=num_views, width=width, height_px=height),
        frames=frames,
    )


def default_scene(
    width: int = 640, height: int = 480, num_views: int = 5, frames: int = 8, name: str = "default"
) -> SceneSpec:
    """Room, furniture, a linearly moving ball and a circling box, with 10 anchors."""
    primitives = _furniture() + [
        PrimitiveSpec(
            id="ball",
            kind="sphere",
            center=(0.9, -1.0, 0.5),
            radius=0.25,
            texture=4,
            motion=MotionSpec(kind="linear", direction=(-1.0, 0.3, 0.0), speed=0.02),
        ),
        PrimitiveSpec(
            id="tray",
            kind="box",
            center=(-1.0, -0.6, 0.3),
            half_extents=(0.2, 0.15, 0.3),
            texture=5,
            motion=MotionSpec(kind="circular", pivot=(-1.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0), speed=0.02),
        ),
    ]
    anchors = [
        AnchorSpec(id="table_a", primitive="table", offset=(0.3, 0.2, 0.4)),
        AnchorSpec(id="table_b", primitive="table", offset=(-0.3, -0.2, 0.4)),
        AnchorSpec(id="table_c", primitive="table", offset=(0.0, 0.0, 0.4)),
        AnchorSpec(id="cabinet_top", primitive="cabinet", offset=(0.0, 0.0, 0.6)),
        AnchorSpec(id="lamp_top", primitive="lamp", offset=(0.0, 0.0, 0.35)),
        AnchorSpec(id="ball_top", primitive="ball", offset=(0.0, 0.0, 0.25)),
        AnchorSpec(id="ball_side", primitive="ball", offset=(0.0, -0.17677669529663687, 0.17677669529663687)),
        AnchorSpec(id="ball_front", primitive="ball", offset=(0.17677669529663687, 0.0, 0.17677669529663687)),
        AnchorSpec(id="tray_top", primitive="tray", offset=(0.0, 0.0, 0.3)),
        AnchorSpec(id="tray_corner", primitive="tray", offset=(0.1, 0.08, 0.3)),
    ]
    return SceneSpec(
        name=name,
        room=RoomSpec(size=(8.0, 8.0, 3.0), texture=0),
        primitives=primitives,
        cameras=ring_cameras(num_views=num_views, width=width, height_px=height),
        frames=frames,
        anchors=anchors,
    )


def occlusion_scene(
    mode: Literal["cross_view", "all_view"] = "cross_view",
    width: int = 640,
    height: int = 480,
    frames: int = 26,
) -> SceneSpec:
    """A red ball at table height seen by a 5-camera ring, with blue occluders.

    cross_view: two walls hide the ball from cameras 0 and 1 in every frame.
    all_view: a box sweeps along x at 0.1 m/frame and swallows the ball; the
    anchor is hidden from every camera in frames 10-15 and the whole ball in 11-14.
    """
    target = (0.0, 0.0, 0.5)
    primitives = [
        PrimitiveSpec(id="target", kind="sphere", center=target, radius=0.08, texture=6, tint=TARGET_TINT),
    ]
    if mode == "cross_view":
        for v in (0, 1):
            angle = 2 * np.pi * v / 5
            primitives.append(
                PrimitiveSpec(
                    id=f"wall_{v}",
                    kind="box",
                    center=(0.6 * float(np.cos(angle)), 0.6 * float(np.sin(angle)), 0.75),
                    rotation=(0.0, 0.0, float(angle)),
                    half_extents=(0.05, 0.35, 0.75),
                    texture=7,
                    tint=OCCLUDER_TINT,
                )
            )
    elif mode == "all_view":
        primitives.append(
            PrimitiveSpec(
                id="sweeper",
                kind="box",
                center=(-1.25, 0.0, 0.5),
                half_extents=(0.3, 0.3, 0.3),
                texture=7,
                tint=OCCLUDER_TINT,
                motion=MotionSpec(kind="linear", direction=(1.0, 0.0, 0.0), speed=0.1),
            )
        )
    else:
        raise ValueError(f"unknown occlusion mode {mode!r}")
    anchors = [
        AnchorSpec(id="target_top", primitive="target", offset=(0.0, 0.0, 0.08)),
    ]
    return SceneSpec(
        name=f"occlusion_{mode}",
        room=RoomSpec(size=(8.0, 8.0, 3.0), texture=0),
        primitives=primitives,
        cameras=ring_cameras(num_views=5, target=target, width=width, height_px=height),
        frames=frames,
        anchors=anchors,
    )


PRESETS = {
    "room": room_scene,
    "default": default_scene,
    "occlusion_cross_view": lambda **kw: occlusion_scene("cross_view", **kw),
    "occlusion_all_view": lambda **kw: occlusion_scene("all_view", **kw),
}


def preset(name: str, **kwargs) -> SceneSpec:
    """Look up a preset scene by name."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)


def preset_names() -> Sequence[str]:
    return sorted(PRESETS)
