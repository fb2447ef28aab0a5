"""Cross-view geometric consistency of a calibrated rig."""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

from core.geometry import MultiViewFrame, RigCalibration
from rectification.geometry import RectifiedGeometry
from rectification.residuals import ResidualSample, cross_view_residuals
from rectification.sampling import SampleSet, select_samples


@dataclass(frozen=True)
class ConsistencyEval:
    mean: float
    median: float
    count: int
    worst: Tuple[ResidualSample, ...] = ()

    def as_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "median": self.median, "count": self.count}

    def format(self) -> str:
        lines = [
            f"{'mean[m]':>10} {'median[m]':>10} {'samples':>8}",
            f"{self.mean:10.4f} {self.median:10.4f} {self.count:8d}",
        ]
        if self.worst:
            lines.append(f"{'source':>6} {'u_x':>8} {'u_y':>8} {'target':>6} {'r[m]':>10}")
            lines.extend(
                f"{s.source:6d} {s.pixel[0]:8.1f} {s.pixel[1]:8.1f} {s.target:6d} {s.value:10.4f}" for s in self.worst
            )
        return "\n".join(lines)


def consistency_eval(
    rig: RigCalibration,
    corrections: Sequence[Tuple[float, float]],
    frame: MultiViewFrame,
    samples: Optional[SampleSet] = None,
    normalizers: Optional[Sequence[float]] = None,
    samples_per_pair: int = 512,
    seed: int = 0,
    worst: int = 0,
) -> ConsistencyEval:
    """Mean and median |cross-view reprojection residual| in meters.

    `worst` > 0 also keeps that many samples with the largest |residual|.

    Raises:
        InsufficientOverlapError: If fewer than 6 samples are usable
    """
    if samples is None:
        samples = select_samples(frame, samples_per_pair, seed)
    residuals = cross_view_residuals(rig, corrections, frame, samples, normalizers)
    return ConsistencyEval(
        mean=residuals.mean_abs,
        median=residuals.median_abs,
        count=residuals.count,
        worst=tuple(residuals.largest(worst)),
    )


def geometry_consistency(
    geom: RectifiedGeometry,
    frame: MultiViewFrame,
    samples: Optional[SampleSet] = None,
    samples_per_pair: int = 512,
    seed: int = 0,
    worst: int = 0,
) -> ConsistencyEval:
    return consistency_eval(
        geom.rig, geom.corrections, frame, samples, geom.normalizers, samples_per_pair, seed, worst
    )
