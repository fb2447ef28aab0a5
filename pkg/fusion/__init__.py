"""Fused metric feature clouds and their spatial index."""

from fusion.cloud import FusedCloud, fuse_frame, fuse_sequence
from fusion.features import FEATURE_DIM, extract_features
from fusion.spatial_index import SpatialIndex, brute_force_knn, knn

__all__ = [
    "FEATURE_DIM",
    "FusedCloud",
    "SpatialIndex",
    "brute_force_knn",
    "extract_features",
    "fuse_frame",
    "fuse_sequence",
    "knn",
]
