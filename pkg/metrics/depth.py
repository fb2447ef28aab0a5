"""Depth accuracy against ground truth."""

from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np

from core.errors import InvariantViolationError, UndefinedMetricError
from core.geometry import DepthMap


@dataclass(frozen=True)
class DepthEval:
    abs_rel: float
    rmse: float
    count: int

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def format(self) -> str:
        return f"{'AbsRel':>8} {'RMSE[m]':>10} {'pixels':>9}\n{self.abs_rel:8.4f} {self.rmse:10.4f} {self.count:9d}"


def _joint(pred: DepthMap, gt: DepthMap):
    if pred.data.shape != gt.data.shape:
        raise InvariantViolationError(
            f"predicted depth {pred.width}x{pred.height} does not match ground truth {gt.width}x{gt.height}"
        )
    joint = pred.valid_mask & gt.valid_mask
    return pred.data[joint].astype(np.float64), gt.data[joint].astype(np.float64)


def depth_eval(pred: DepthMap, gt: DepthMap) -> DepthEval:
    """AbsRel = mean(|d_hat - d| / d) and RMSE over jointly valid pixels.

    Raises:
        UndefinedMetricError: If no pixel is valid in both maps
    """
    d_hat, d = _joint(pred, gt)
    if d.size == 0:
        raise UndefinedMetricError("no jointly valid pixels between prediction and ground truth")
    return DepthEval(
        abs_rel=float(np.mean(np.abs(d_hat - d) / d)),
        rmse=float(np.sqrt(np.mean((d_hat - d) ** 2))),
        count=int(d.size),
    )


def depth_eval_many(preds: Sequence[DepthMap], gts: Sequence[DepthMap]) -> DepthEval:
    """Pooled over every pixel of several maps (e.g. all views and frames)."""
    if len(preds) != len(gts):
        raise InvariantViolationError(f"{len(preds)} predicted maps but {len(gts)} ground-truth maps")
    pairs = [_joint(p, g) for p, g in zip(preds, gts)]
    d_hat = np.concatenate([p[0] for p in pairs]) if pairs else np.zeros(0)
    d = np.concatenate([p[1] for p in pairs]) if pairs else np.zeros(0)
    if d.size == 0:
        raise UndefinedMetricError("no jointly valid pixels between prediction and ground truth")
    return DepthEval(
        abs_rel=float(np.mean(np.abs(d_hat - d) / d)),
        rmse=float(np.sqrt(np.mean((d_hat - d) ** 2))),
        count=int(d.size),
    )
