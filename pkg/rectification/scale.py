"""Global metric scale from anchor depth."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from core.errors import InsufficientAnchorError, InvariantViolationError
from core.geometry import DepthMap

MIN_ANCHOR_PIXELS = 100


@dataclass(frozen=True)
class ScaleEstimate:
    scale: float
    observable: bool
    pixel_count: int


def recover_scale(
    unscaled_depth: Sequence[DepthMap],
    anchor_depth: Sequence[Optional[DepthMap]],
) -> ScaleEstimate:
    """Median of anchor / unscaled over pixels valid in both, pooled over views.

    Args:
        unscaled_depth: Depth per view in working units
        anchor_depth: Metric depth per view, None where the view has no anchor

    Returns:
        ScaleEstimate; m = 1 and observable=False when no view has an anchor

    Raises:
        InsufficientAnchorError: If fewer than 100 pixels are jointly valid
    """
    if len(unscaled_depth) != len(anchor_depth):
        raise InvariantViolationError(
            f"{len(unscaled_depth)} unscaled maps but {len(anchor_depth)} anchor entries"
        )
    if all(a is None for a in anchor_depth):
        logger.warning("No anchor depth available: metric scale is unobservable, using m = 1")
        return ScaleEstimate(scale=1.0, observable=False, pixel_count=0)
    ratios = []
    for unscaled, anchor in zip(unscaled_depth, anchor_depth):
        if anchor is None:
            continue
        if anchor.data.shape != unscaled.data.shape:
            raise InvariantViolationError(
                f"anchor {anchor.width}x{anchor.height} does not match depth {unscaled.width}x{unscaled.height}"
            )
        joint = unscaled.valid_mask & anchor.valid_mask
        ratios.append(anchor.data[joint].astype(np.float64) / unscaled.data[joint].astype(np.float64))
    pooled = np.concatenate(ratios)
    if pooled.size < MIN_ANCHOR_PIXELS:
        raise InsufficientAnchorError(
            f"only {pooled.size} jointly valid anchor pixels (need {MIN_ANCHOR_PIXELS})"
        )
    scale = float(np.median(pooled))
    logger.info(f"Recovered metric scale m={scale:.6f} from {pooled.size} anchor pixels")
    return ScaleEstimate(scale=scale, observable=True, pixel_count=int(pooled.size))
