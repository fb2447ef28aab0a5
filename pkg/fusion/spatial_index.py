"""kd-tree over fused cloud points.

Nodes split at the median of their widest bounding-box axis; ties in the
coordinate are ordered by point index so the build is reproducible. Queries
return exactly what a linear scan returns: the k smallest squared distances,
ties broken by ascending point index.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.errors import EmptyCloudError, InvariantViolationError


def squared_distances(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    dx = points[:, 0] - p[0]
    dy = points[:, 1] - p[1]
    dz = points[:, 2] - p[2]
    return dx * dx + dy * dy + dz * dz


def brute_force_knn(points: np.ndarray, p: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Linear scan reference: (indices, distances) of the k nearest points."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        raise EmptyCloudError("k-nearest-neighbour query on an empty cloud")
    d2 = squared_distances(points, np.asarray(p, dtype=np.float64))
    order = np.lexsort((np.arange(d2.size), d2))[:k]
    return order.astype(np.int64), np.sqrt(d2[order])


@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    start: int
    end: int
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


class SpatialIndex:
    """Immutable kd-tree; safe for concurrent queries.

    Args:
        points: (M, 3) room-frame points, M >= 1
        leaf_size: Maximum points per leaf

    Raises:
        EmptyCloudError: If there are no points
    """

    def __init__(self, points: np.ndarray, leaf_size: int = 16) -> None:
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InvariantViolationError(f"expected (M, 3) points, got shape {points.shape}")
        if points.shape[0] == 0:
            raise EmptyCloudError("cannot index an empty cloud")
        if leaf_size < 1:
            raise InvariantViolationError(f"leaf_size must be >= 1, got {leaf_size}")
        self.points = points
        self.points.setflags(write=False)
        self.leaf_size = leaf_size
        self.order = np.arange(points.shape[0], dtype=np.int64)
        self.nodes: List[_Node] = []
        self._build()

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def _build(self) -> None:
        stack = [self._make_node(0, len(self))]
        while stack:
            node_id = stack.pop()
            node = self.nodes[node_id]
            count = node.end - node.start
            if count <= self.leaf_size:
                continue
            axis = int(np.argmax(node.upper - node.lower))
            members = self.order[node.start : node.end]
            ranked = members[np.lexsort((members, self.points[members, axis]))]
            self.order[node.start : node.end] = ranked
            middle = node.start + count // 2
            node.left = self._make_node(node.start, middle)
            node.right = self._make_node(middle, node.end)
            stack.extend([node.left, node.right])

    def _make_node(self, start: int, end: int) -> int:
        members = self.points[self.order[start:end]]
        self.nodes.append(_Node(lower=members.min(axis=0), upper=members.max(axis=0), start=start, end=end))
        return len(self.nodes) - 1

    @staticmethod
    def _box_distance(node: _Node, p: np.ndarray) -> float:
        gap = np.maximum(np.maximum(node.lower - p, p - node.upper), 0.0)
        return float(gap[0] * gap[0] + gap[1] * gap[1] + gap[2] * gap[2])

    def knn(self, p: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """(indices, distances) of the min(k, M) nearest points, ascending.

        Raises:
            InvariantViolationError: If k < 1 or p is not a finite 3-vector
        """
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise InvariantViolationError(f"query must be a finite 3-vector, got {p}")
        if k < 1:
            raise InvariantViolationError(f"k must be >= 1, got {k}")
        k = min(k, len(self))
        best_d2 = np.zeros(0)
        best_idx = np.zeros(0, dtype=np.int64)
        stack = [0]
        while stack:
            node = self.nodes[stack.pop()]
            if best_d2.size == k and self._box_distance(node, p) > best_d2[-1]:
                continue
            if node.is_leaf:
                members = self.order[node.start : node.end]
                d2 = squared_distances(self.points[members], p)
                cand_d2 = np.concatenate([best_d2, d2])
                cand_idx = np.concatenate([best_idx, members])
                keep = np.lexsort((cand_idx, cand_d2))[:k]
                best_d2, best_idx = cand_d2[keep], cand_idx[keep]
                continue
            left, right = self.nodes[node.left], self.nodes[node.right]
            # push the farther child first so the nearer one is searched first
            if self._box_distance(left, p) <= self._box_distance(right, p):
                stack.extend([node.right, node.left])
            else:
                stack.extend([node.left, node.right])
        return best_idx, np.sqrt(best_d2)


def knn(index: SpatialIndex, p: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    return index.knn(p, k)
