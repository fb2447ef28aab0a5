"""Rig rectification: robust joint refinement of intrinsics, poses and depth correction."""

from rectification.geometry import RectifiedGeometry, apply_corrections, correct_depth
from rectification.hints import ABLATION_GRID, HintSet, ViewHint
from rectification.optimizer import rectify
from rectification.residuals import ResidualSet, cross_view_residuals
from rectification.sampling import SampleSet, select_samples
from rectification.scale import ScaleEstimate, recover_scale

__all__ = [
    "ABLATION_GRID",
    "HintSet",
    "RectifiedGeometry",
    "ResidualSet",
    "SampleSet",
    "ScaleEstimate",
    "ViewHint",
    "apply_corrections",
    "correct_depth",
    "cross_view_residuals",
    "recover_scale",
    "rectify",
    "select_samples",
]
