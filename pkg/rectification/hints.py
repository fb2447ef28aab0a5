"""Optional calibration inputs handed to the rectifier.

RGB is always present. Intrinsics and pose hints carry values; a depth hint
marks the view's sensor depth as metric, and the hinted values are the frame's
own depth maps.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from core.errors import InvariantViolationError
from core.geometry import CameraIntrinsics, CameraPose, RigCalibration

HINT_NAMES = ("rgb", "k", "pose", "depth")

# Rows of the input ablation, in table order: (K, Pose, Depth)
ABLATION_GRID: Tuple[Tuple[bool, bool, bool], ...] = (
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (True, True, False),
    (True, True, True),
    (True, False, True),
)


@dataclass(frozen=True)
class ViewHint:
    intrinsics: Optional[CameraIntrinsics] = None
    pose: Optional[CameraPose] = None
    has_depth: bool = False

    @property
    def has_intrinsics(self) -> bool:
        return self.intrinsics is not None

    @property
    def has_pose(self) -> bool:
        return self.pose is not None


@dataclass(frozen=True)
class HintSet:
    """Per-view hints for every camera of the rig."""

    views: Tuple[ViewHint, ...]

    def __post_init__(self) -> None:
        views = tuple(self.views)
        if len(views) < 2:
            raise InvariantViolationError(f"hints must cover at least 2 views, got {len(views)}")
        object.__setattr__(self, "views", views)

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def any_depth(self) -> bool:
        return any(h.has_depth for h in self.views)

    @property
    def any_pose(self) -> bool:
        return any(h.has_pose for h in self.views)

    @property
    def label(self) -> str:
        """Human-readable input combination, e.g. 'RGB+K+Depth'."""
        parts = ["RGB"]
        if any(h.has_intrinsics for h in self.views):
            parts.append("K")
        if self.any_pose:
            parts.append("Pose")
        if self.any_depth:
            parts.append("Depth")
        return "+".join(parts)

    @classmethod
    def rgb_only(cls, num_views: int) -> "HintSet":
        return cls(views=tuple(ViewHint() for _ in range(num_views)))

    @classmethod
    def from_rig(
        cls,
        rig: RigCalibration,
        intrinsics: bool = True,
        pose: bool = True,
        depth: bool = True,
    ) -> "HintSet":
        """Take hint values for every view from a (typically noisy) rig."""
        return cls(
            views=tuple(
                ViewHint(
                    intrinsics=k if intrinsics else None,
                    pose=p if pose else None,
                    has_depth=depth,
                )
                for k, p in rig.views
            )
        )

    @classmethod
    def from_flags(cls, rig: RigCalibration, flags: str) -> "HintSet":
        """Build hints from a comma-separated flag list such as 'rgb,k,depth'."""
        use_k, use_pose, use_depth = parse_hint_flags(flags)
        return cls.from_rig(rig, intrinsics=use_k, pose=use_pose, depth=use_depth)


def parse_hint_flags(flags: str) -> Tuple[bool, bool, bool]:
    """Parse '--hints' text into (use_intrinsics, use_pose, use_depth).

    Raises:
        ValueError: On unknown flag names
    """
    names: List[str] = [f.strip().lower() for f in flags.split(",") if f.strip()]
    unknown = [n for n in names if n not in HINT_NAMES]
    if unknown:
        raise ValueError(f"unknown hint(s) {unknown}; expected a subset of {list(HINT_NAMES)}")
    return "k" in names, "pose" in names, "depth" in names


def grid_label(row: Sequence[bool]) -> str:
    use_k, use_pose, use_depth = row
    return "+".join(["RGB"] + [n for n, on in zip(("K", "Pose", "Depth"), (use_k, use_pose, use_depth)) if on])


def grid_flags(row: Sequence[bool]) -> str:
    use_k, use_pose, use_depth = row
    return ",".join(["rgb"] + [n for n, on in zip(("k", "pose", "depth"), (use_k, use_pose, use_depth)) if on])
