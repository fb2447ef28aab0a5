"""Stratified selection of source pixels for every ordered view pair."""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.geometry import DepthMap, MultiViewFrame
from core.rng import make_rng


@dataclass(frozen=True, eq=False)
class PairSamples:
    """Pixels (row, col) of the source view reprojected into the target view."""

    source: int
    target: int
    rows: np.ndarray
    cols: np.ndarray

    def __len__(self) -> int:
        return int(self.rows.shape[0])


@dataclass(frozen=True)
class SampleSet:
    pairs: Tuple[PairSamples, ...]

    @property
    def total(self) -> int:
        return sum(len(p) for p in self.pairs)

    def source_pixels(self, v: int) -> Tuple[np.ndarray, np.ndarray]:
        """Unique (rows, cols) sampled with view v as source, row-major order."""
        rows = [p.rows for p in self.pairs if p.source == v]
        cols = [p.cols for p in self.pairs if p.source == v]
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        stacked = np.unique(np.stack([np.concatenate(rows), np.concatenate(cols)], axis=1), axis=0)
        return stacked[:, 0], stacked[:, 1]


def _cell_members(valid: np.ndarray, cells_per_side: int) -> List[np.ndarray]:
    """Flat indices of valid pixels in each grid cell, cells in row-major order."""
    height, width = valid.shape
    row_edges = np.linspace(0, height, cells_per_side + 1).astype(int)
    col_edges = np.linspace(0, width, cells_per_side + 1).astype(int)
    members = []
    for i in range(cells_per_side):
        for j in range(cells_per_side):
            block = valid[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            rr, cc = np.nonzero(block)
            members.append((rr + row_edges[i]) * width + (cc + col_edges[j]))
    return members


def select_samples(
    frame: MultiViewFrame,
    samples_per_pair: int = 512,
    seed: int = 0,
    depths: Optional[Sequence[DepthMap]] = None,
) -> SampleSet:
    """Pick up to `samples_per_pair` valid-depth pixels per ordered view pair.

    The image is divided into a ceil(sqrt(N)) x ceil(sqrt(N)) grid; one random valid
    pixel is taken from each non-empty cell, then a random subset of N is kept
    if there are more. Draws use the stream (seed, "samples", v, w).
    """
    depth_maps = list(depths) if depths is not None else [frame.depth(v) for v in range(frame.num_views)]
    cells_per_side = math.ceil(math.sqrt(samples_per_pair))
    members = [_cell_members(d.valid_mask, cells_per_side) for d in depth_maps]
    pairs = []
    for v, depth in enumerate(depth_maps):
        for w in range(len(depth_maps)):
            if v == w:
                continue
            rng = make_rng(seed, "samples", v, w)
            picks = [cell[rng.integers(len(cell))] for cell in members[v] if len(cell)]
            flat = np.array(picks, dtype=np.int64)
            if flat.size > samples_per_pair:
                keep = np.sort(rng.choice(flat.size, size=samples_per_pair, replace=False))
                flat = flat[keep]
            rows, cols = np.divmod(flat, depth.width)
            pairs.append(PairSamples(source=v, target=w, rows=rows, cols=cols))
    return SampleSet(pairs=tuple(pairs))
