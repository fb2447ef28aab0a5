"""Test fixtures and configuration."""

import os

# Set test mode environment variables BEFORE any imports
os.environ.setdefault("RIGTRACK_THREADS", "1")
os.environ.setdefault("RIGTRACK_SEED", "0")
os.environ.setdefault("RIGTRACK_DEBUG", "false")

import numpy as np
import pytest

from config.settings import Settings
from core.geometry import CameraIntrinsics, CameraPose, RigCalibration
from synthetic.generate import SyntheticSequence, generate_scene
from synthetic.presets import default_scene, room_scene

SMALL_WIDTH = 64
SMALL_HEIGHT = 48


@pytest.fixture
def test_settings() -> Settings:
    """Settings sized for small scenes."""
    settings = Settings(threads=1, seed=0)
    settings.rectifier.samples_per_pair = 128
    return settings


@pytest.fixture
def intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=50.0, fy=50.0, cx=32.0, cy=24.0)


@pytest.fixture
def two_view_rig(intrinsics) -> RigCalibration:
    """Two cameras 2 m apart looking at a point 3 m ahead."""
    target = (0.0, 3.0, 1.0)
    return RigCalibration(
        views=(
            (intrinsics, CameraPose.look_at((-1.0, 0.0, 1.0), target)),
            (intrinsics, CameraPose.look_at((1.0, 0.0, 1.0), target)),
        )
    )


@pytest.fixture(scope="session")
def room_sequence() -> SyntheticSequence:
    """Static room, one frame, five views."""
    return generate_scene(room_scene(width=SMALL_WIDTH, height=SMALL_HEIGHT), seed=0)


@pytest.fixture(scope="session")
def moving_sequence() -> SyntheticSequence:
    """Default scene with moving primitives and anchors, four frames."""
    return generate_scene(default_scene(width=SMALL_WIDTH, height=SMALL_HEIGHT, frames=4), seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
