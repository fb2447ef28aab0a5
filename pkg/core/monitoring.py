"""Run metrics and the rectifier's optimization trace."""

from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Union

from loguru import logger


def utc_now() -> datetime:
    """Get current UTC time as timezone-aware datetime."""
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class TraceEntry:
    """One Levenberg-Marquardt trial step."""

    iteration: int
    cost: float
    damping: float
    accepted: bool

    def format(self) -> str:
        return (
            f"iter={self.iteration} cost={self.cost:.6e} "
            f"damping={self.damping:.3e} accepted={int(self.accepted)}"
        )


@dataclass
class OptimizationTrace:
    """Line-oriented record of every trial step taken by the optimizer.

    Entries are logged at DEBUG as they are recorded and can be written to a
    text file afterwards, one step per line.
    """

    entries: List[TraceEntry] = field(default_factory=list)

    def record(self, iteration: int, cost: float, damping: float, accepted: bool) -> None:
        entry = TraceEntry(iteration=iteration, cost=float(cost), damping=float(damping), accepted=accepted)
        self.entries.append(entry)
        logger.debug(entry.format())

    @property
    def accepted_costs(self) -> List[float]:
        """Cost after each accepted step, in order."""
        return [e.cost for e in self.entries if e.accepted]

    def to_text(self) -> str:
        return "".join(e.format() + "\n" for e in self.entries)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class StageTiming:
    """Accumulated wall-clock time and outcome counts for one named stage."""

    runs: int = 0
    failures: int = 0
    total_seconds: float = 0.0


class RunMetrics:
    """Collects per-stage durations and success/failure counts for a pipeline run."""

    def __init__(self) -> None:
        self.start_time = utc_now()
        self.stages: Dict[str, StageTiming] = {}

    def record(self, stage: str, seconds: float, success: bool) -> None:
        """Record one stage execution.

        Args:
            stage: Stage name
            seconds: Wall-clock duration
            success: Whether the stage completed
        """
        timing = self.stages.setdefault(stage, StageTiming())
        timing.runs += 1
        timing.total_seconds += seconds
        if not success:
            timing.failures += 1

    @property
    def success_count(self) -> int:
        return sum(t.runs - t.failures for t in self.stages.values())

    @property
    def error_count(self) -> int:
        return sum(t.failures for t in self.stages.values())

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics snapshot."""
        elapsed = (utc_now() - self.start_time).total_seconds()
        total = self.success_count + self.error_count
        success_rate = (self.success_count / total * 100) if total > 0 else 0
        return {
            "elapsed_seconds": elapsed,
            "total_stages": total,
            "successful": self.success_count,
            "failed": self.error_count,
            "success_rate_percent": round(success_rate, 2),
            "stages": {name: asdict(t) for name, t in self.stages.items()},
        }
