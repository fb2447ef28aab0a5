"""Deterministic per-pixel patch descriptors.

Each pixel gets a 16-D vector built from its square patch (default 7x7,
clamped at the border). Every block is zero-centred so that surfaces of
different colour and structure point in different directions:

- 3 chroma values: patch-mean R, G, B divided by their sum, minus 1/3
- 8 gradient-orientation bins: patch-mean gradient magnitude per octant,
  minus the mean over the octants
- 5 radial moments: patch-mean intensity minus 0.5, then four
  centre-surround responses with zero-sum kernels (r / half)^k, k = 1..4

The vector is L2-normalized. Negating a gradient moves it exactly four bins,
so a 180 degree image rotation permutes the orientation histogram.
"""

import numpy as np
from scipy import ndimage

from core.errors import InvariantViolationError
from core.geometry import RgbImage

FEATURE_DIM = 16
ORIENTATION_BINS = 8
RADIAL_MOMENTS = 5
# Chroma dominates so that one surface stays self-similar across its texture
CHROMA_WEIGHT = 4.0
GRADIENT_WEIGHT = 2.0
MOMENT_WEIGHT = 0.5
NEUTRAL_INTENSITY = 0.5


def orientation_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Octant index 0..7 of the gradient angle in [0, 2*pi), by sign tests only."""
    upper = (gy > 0) | ((gy == 0) & (gx > 0))
    ux = np.where(upper, gx, -gx)
    uy = np.where(upper, gy, -gy)
    sub = np.where(ux > 0, np.where(uy < ux, 0, 1), np.where(uy > -ux, 2, 3))
    return sub + 4 * (~upper)


def _radial_kernels(patch_size: int) -> np.ndarray:
    """Kernel 0 is the patch mean; kernels 1..4 are zero-sum radial weights."""
    half = patch_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    radius = np.hypot(offsets[:, None], offsets[None, :]) / max(half, 1)
    kernels = np.stack([radius**k for k in range(RADIAL_MOMENTS)])
    kernels[1:] -= kernels[1:].mean(axis=(1, 2), keepdims=True)
    return kernels / (patch_size * patch_size)


def normalize_descriptors(features: np.ndarray) -> np.ndarray:
    """L2-normalize along the last axis; zero vectors become the uniform unit vector."""
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    uniform = np.full(features.shape[-1], 1.0 / np.sqrt(features.shape[-1]))
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, features / safe, uniform)


def extract_features(img: RgbImage, patch_size: int = 7) -> np.ndarray:
    """Descriptor map (height, width, 16) of unit vectors.

    Raises:
        InvariantViolationError: If patch_size is not a positive odd number
    """
    if patch_size < 1 or patch_size % 2 == 0:
        raise InvariantViolationError(f"patch_size must be odd and positive, got {patch_size}")
    rgb = img.data.astype(np.float64) / 255.0
    height, width = img.height, img.width
    features = np.empty((height, width, FEATURE_DIM))

    means = np.stack(
        [ndimage.uniform_filter(rgb[..., c], size=patch_size, mode="nearest") for c in range(3)], axis=-1
    )
    total = means.sum(axis=-1, keepdims=True)
    chroma = np.where(total > 0, means / np.where(total > 0, total, 1.0), 1.0 / 3.0)
    features[..., 0:3] = CHROMA_WEIGHT * (chroma - 1.0 / 3.0)

    intensity = rgb.mean(axis=-1)
    gx = ndimage.sobel(intensity, axis=1, mode="nearest")
    gy = ndimage.sobel(intensity, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy)
    bins = orientation_bins(gx, gy)
    for b in range(ORIENTATION_BINS):
        weighted = np.where(bins == b, magnitude, 0.0)
        features[..., 3 + b] = ndimage.uniform_filter(weighted, size=patch_size, mode="nearest")
    gradient = features[..., 3:11]
    features[..., 3:11] = GRADIENT_WEIGHT * (gradient - gradient.mean(axis=-1, keepdims=True))

    for k, kernel in enumerate(_radial_kernels(patch_size)):
        response = ndimage.correlate(intensity, kernel, mode="nearest")
        if k == 0:
            response = response - NEUTRAL_INTENSITY
        features[..., 11 + k] = MOMENT_WEIGHT * response

    return normalize_descriptors(features)
