"""Synthetic multi-view RGB-D scenes with exact ground truth."""

from synthetic.generate import SyntheticSequence, generate_scene
from synthetic.perturb import PerturbationSpec, perturb_calibration, perturb_depth
from synthetic.presets import default_scene, occlusion_scene, preset, preset_names, room_scene
from synthetic.scene import SceneSpec, load_scene_spec, save_scene_spec

__all__ = [
    "PerturbationSpec",
    "SceneSpec",
    "SyntheticSequence",
    "default_scene",
    "generate_scene",
    "load_scene_spec",
    "occlusion_scene",
    "perturb_calibration",
    "perturb_depth",
    "preset",
    "preset_names",
    "room_scene",
    "save_scene_spec",
]
