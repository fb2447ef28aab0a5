"""Scene specification documents for the synthetic ground-truth generator.

A scene is an optional textured room box plus planes, spheres and boxes. Any
primitive may move rigidly along a linear or circular path. The room frame is
z-up with the room floor at z = 0 and walls at +-Lx/2, +-Ly/2.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from scipy.spatial.transform import Rotation

from core.errors import MalformedDocumentError, MissingFileError
from core.geometry import CameraIntrinsics, CameraPose

Vec3 = Tuple[float, float, float]


class MotionSpec(BaseModel):
    """Per-frame rigid motion of a primitive.

    linear: translate by speed * direction (normalized) every frame.
    circular: rotate about the axis through `pivot` so that the primitive's
    centre travels `speed` meters per frame along its circle.
    """

    kind: Literal["static", "linear", "circular"] = "static"
    speed: float = Field(default=0.0, ge=0, description="meters per frame")
    direction: Vec3 = (1.0, 0.0, 0.0)
    pivot: Vec3 = (0.0, 0.0, 0.0)
    axis: Vec3 = (0.0, 0.0, 1.0)

    @field_validator("direction", "axis")
    @classmethod
    def nonzero(cls, v: Vec3) -> Vec3:
        if np.linalg.norm(v) == 0:
            raise ValueError("direction/axis must be non-zero")
        return v

    def transform_at(self, t: int, center: Vec3) -> CameraPose:
        """Rigid world transform taking the primitive at frame 0 to frame t."""
        if self.kind == "static" or self.speed == 0 or t == 0:
            return CameraPose.identity()
        if self.kind == "linear":
            d = np.asarray(self.direction, dtype=float)
            return CameraPose(r=np.eye(3), t=d / np.linalg.norm(d) * self.speed * t)
        axis = np.asarray(self.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        pivot = np.asarray(self.pivot, dtype=float)
        offset = np.asarray(center, dtype=float) - pivot
        radius = np.linalg.norm(offset - np.dot(offset, axis) * axis)
        if radius == 0:
            return CameraPose.identity()
        r = Rotation.from_rotvec(axis * (self.speed / radius) * t).as_matrix()
        return CameraPose(r=r, t=pivot - r @ pivot)


class PrimitiveSpec(BaseModel):
    """A textured analytic primitive.

    plane: finite rectangle in the local xy-plane (normal = local z), size from
    half_extents[0:2]. sphere: radius. box: oriented box with half_extents.
    """

    id: str
    kind: Literal["plane", "sphere", "box"]
    center: Vec3
    rotation: Vec3 = Field(default=(0.0, 0.0, 0.0), description="axis-angle, radians")
    radius: float = Field(default=0.5, gt=0)
    half_extents: Vec3 = (0.5, 0.5, 0.5)
    texture: int = Field(default=0, ge=0)
    tint: Optional[Vec3] = Field(default=None, description="Base colour replacing the texture's own, channels in [0, 1]")
    motion: MotionSpec = Field(default_factory=MotionSpec)

    @field_validator("half_extents")
    @classmethod
    def positive_extents(cls, v: Vec3) -> Vec3:
        if any(h <= 0 for h in v):
            raise ValueError("half_extents must be positive")
        return v

    @field_validator("tint")
    @classmethod
    def tint_in_unit_cube(cls, v: Optional[Vec3]) -> Optional[Vec3]:
        if v is not None and any(not 0.0 <= c <= 1.0 for c in v):
            raise ValueError("tint channels must lie in [0, 1]")
        return v

    def pose_at(self, t: int) -> CameraPose:
        """Local-to-room transform of the primitive at frame t."""
        base = CameraPose.from_rotvec(self.rotation, self.center)
        return self.motion.transform_at(t, self.center).compose(base)

    def contains(self, point: np.ndarray, t: int) -> bool:
        """Whether a room point lies strictly inside the (closed) primitive volume."""
        if self.kind == "plane":
            return False
        local = self.pose_at(t).inverse().transform(point)
        if self.kind == "sphere":
            return bool(np.linalg.norm(local) < self.radius)
        return bool(np.all(np.abs(local) < np.asarray(self.half_extents)))


class RoomSpec(BaseModel):
    """Axis-aligned room box seen from the inside."""

    size: Vec3 = (8.0, 8.0, 3.0)
    texture: int = Field(default=0, ge=0)

    @field_validator("size")
    @classmethod
    def positive_size(cls, v: Vec3) -> Vec3:
        if any(s <= 0 for s in v):
            raise ValueError("room size must be positive")
        return v

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.size[0] / 2, -self.size[1] / 2, 0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.size[0] / 2, self.size[1] / 2, self.size[2]])


class CameraSpec(BaseModel):
    """One rig camera. Orientation comes from look_at if given, else from rotation."""

    position: Vec3
    look_at: Optional[Vec3] = None
    up: Vec3 = (0.0, 0.0, 1.0)
    rotation: Vec3 = Field(default=(0.0, 0.0, 0.0), description="camera-to-room axis-angle")
    width: int = Field(default=640, gt=0)
    height: int = Field(default=480, gt=0)
    fx: float = Field(default=500.0, gt=0)
    fy: float = Field(default=500.0, gt=0)
    cx: Optional[float] = None
    cy: Optional[float] = None

    @property
    def intrinsics(self) -> CameraIntrinsics:
        cx = self.width / 2 if self.cx is None else self.cx
        cy = self.height / 2 if self.cy is None else self.cy
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=cx, cy=cy)

    @property
    def pose(self) -> CameraPose:
        if self.look_at is not None:
            return CameraPose.look_at(self.position, self.look_at, self.up)
        return CameraPose.from_rotvec(self.rotation, self.position)


class AnchorSpec(BaseModel):
    """A tracked surface point: primitive id plus offset in the primitive's local frame."""

    id: str
    primitive: str
    offset: Vec3 = (0.0, 0.0, 0.0)


class SceneSpec(BaseModel):
    """Complete description of a synthetic multi-view sequence."""

    name: str = "scene"
    room: Optional[RoomSpec] = None
    primitives: List[PrimitiveSpec] = Field(default_factory=list)
    cameras: List[CameraSpec]
    frames: int = Field(default=1, ge=1)
    anchors: List[AnchorSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_consistency(self) -> "SceneSpec":
        if len(self.cameras) < 2:
            raise ValueError(f"a rig needs at least 2 cameras, got {len(self.cameras)}")
        ids = [p.id for p in self.primitives]
        if len(set(ids)) != len(ids):
            raise ValueError("primitive ids must be unique")
        anchor_ids = [a.id for a in self.anchors]
        if len(set(anchor_ids)) != len(anchor_ids):
            raise ValueError("anchor ids must be unique")
        for anchor in self.anchors:
            if anchor.primitive not in ids:
                raise ValueError(f"anchor {anchor.id!r} references unknown primitive {anchor.primitive!r}")
        for v, camera in enumerate(self.cameras):
            position = np.asarray(camera.position, dtype=float)
            for primitive in self.primitives:
                for t in range(self.frames):
                    if primitive.contains(position, t):
                        raise ValueError(f"camera {v} is inside primitive {primitive.id!r} at frame {t}")
        return self

    @property
    def num_views(self) -> int:
        return len(self.cameras)

    def primitive(self, primitive_id: str) -> PrimitiveSpec:
        for p in self.primitives:
            if p.id == primitive_id:
                return p
        raise KeyError(primitive_id)

    def anchor_position(self, anchor: AnchorSpec, t: int) -> np.ndarray:
        """Room-frame position of an anchor at frame t."""
        return self.primitive(anchor.primitive).pose_at(t).transform(np.asarray(anchor.offset, dtype=float))


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """Read a SceneSpec JSON document.

    Raises:
        MissingFileError: If the file does not exist
        MalformedDocumentError: If it fails to parse or validate
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path)
    try:
        return SceneSpec.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise MalformedDocumentError(path, str(e)) from e


def save_scene_spec(spec: SceneSpec, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(spec.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
