"""Procedural surface textures: checkerboard plus two octaves of value noise.

Colors are a function of (texture id, seed, 2-D surface coordinates in meters)
only, so a surface point keeps its color while the primitive moves.
"""

from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from core.rng import make_rng

CHECKER_PERIOD = 0.1
NOISE_SCALE = 0.05
FINE_NOISE_SCALE = 0.017
LATTICE = 256


@lru_cache(maxsize=64)
def _texture_tables(texture: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = make_rng(seed, "texture", texture)
    base = rng.uniform(0.35, 1.0, size=3)
    coarse = rng.random((LATTICE, LATTICE))
    fine = rng.random((LATTICE, LATTICE, 3))
    for arr in (base, coarse, fine):
        arr.setflags(write=False)
    return base, coarse, fine


def _value_noise(table: np.ndarray, s: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Smoothly interpolated lattice noise, periodic with the lattice size."""
    fs, fr = np.floor(s), np.floor(r)
    i0 = fs.astype(np.int64) % LATTICE
    j0 = fr.astype(np.int64) % LATTICE
    i1 = (i0 + 1) % LATTICE
    j1 = (j0 + 1) % LATTICE
    ws = s - fs
    wr = r - fr
    ws = ws * ws * (3 - 2 * ws)
    wr = wr * wr * (3 - 2 * wr)
    if table.ndim == 3:
        ws = ws[..., None]
        wr = wr[..., None]
    top = table[i0, j0] * (1 - ws) + table[i1, j0] * ws
    bottom = table[i0, j1] * (1 - ws) + table[i1, j1] * ws
    return top * (1 - wr) + bottom * wr


def shade(
    texture: int, s: np.ndarray, r: np.ndarray, seed: int = 0, tint: Optional[Sequence[float]] = None
) -> np.ndarray:
    """Color surface points.

    Args:
        texture: Texture id
        s, r: Surface coordinates in meters, any matching shape
        seed: Scene seed
        tint: Base colour used instead of the texture's random one

    Returns:
        uint8 array of shape s.shape + (3,)
    """
    base, coarse, fine = _texture_tables(int(texture), int(seed))
    if tint is not None:
        base = np.asarray(tint, dtype=float)
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    checker = (np.floor(s / CHECKER_PERIOD) + np.floor(r / CHECKER_PERIOD)) % 2
    noise = _value_noise(coarse, s / NOISE_SCALE, r / NOISE_SCALE)
    detail = _value_noise(fine, s / FINE_NOISE_SCALE, r / FINE_NOISE_SCALE)
    intensity = 0.25 + 0.3 * checker + 0.35 * noise
    color = base * intensity[..., None] + 0.25 * detail
    return np.clip(np.round(255.0 * color), 0, 255).astype(np.uint8)
