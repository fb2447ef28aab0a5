"""Stage framework for the two-stage pipeline.

Stages declare dependencies on other stages by name; StageChain runs them in
dependency order (ties broken by priority), records per-stage metrics and
skips every stage whose dependency did not complete.
"""

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Generic, List, Optional, TypeVar

from loguru import logger

from core.errors import RigTrackError
from core.monitoring import RunMetrics, utc_now

ContextT = TypeVar("ContextT")


class StageState(str, Enum):
    """Execution state of a stage."""

    IDLE = "idle"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    SKIPPED = "skipped"


class StagePriority(int, Enum):
    """Tie-break among stages whose dependencies are satisfied (lower runs first)."""

    CRITICAL = 1
    HIGH = 2
    NORMAL = 3
    LOW = 4


@dataclass
class StageMetrics:
    """Metrics tracked for each stage."""

    total_runs: int = 0
    successful_runs: int = 0
    failed_runs: int = 0
    total_duration_seconds: float = 0.0
    last_run_end: Optional[datetime] = None
    last_error: Optional[str] = None


@dataclass
class StageResult:
    """Outcome of one stage execution."""

    stage: str
    success: bool
    message: str
    metrics: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    timestamp: datetime = field(default_factory=utc_now)

    def __repr__(self) -> str:
        status = "ok" if self.success else "FAILED"
        return f"[{status}] {self.stage}: {self.message}"


class Stage(ABC, Generic[ContextT]):
    """A pipeline step reading from and writing to a shared context.

    Subclasses implement run(); expected failures are raised as RigTrackError
    and turned into a failed StageResult by the chain.
    """

    def __init__(self, name: str, priority: StagePriority = StagePriority.NORMAL, enabled: bool = True) -> None:
        self.name = name
        self.priority = priority
        self.enabled = enabled
        self.state = StageState.IDLE
        self.metrics = StageMetrics()
        self._dependencies: List[str] = []

    def register_dependency(self, stage_name: str) -> None:
        if stage_name not in self._dependencies:
            self._dependencies.append(stage_name)

    @property
    def dependencies(self) -> List[str]:
        return self._dependencies.copy()

    @abstractmethod
    def run(self, context: ContextT) -> StageResult:
        """Execute the stage against the context."""

    def validate_config(self, context: ContextT) -> bool:
        """Check that the context holds what the stage needs; override as required."""
        return True


class StageChain(Generic[ContextT]):
    """Runs registered stages in dependency order."""

    def __init__(self, run_metrics: Optional[RunMetrics] = None) -> None:
        self.stages: Dict[str, Stage[ContextT]] = {}
        self.execution_order: List[str] = []
        self.run_metrics = run_metrics or RunMetrics()

    def register(self, stage: Stage[ContextT]) -> None:
        """Register a stage.

        Raises:
            ValueError: If a stage with the same name already exists
        """
        if stage.name in self.stages:
            raise ValueError(f"Stage '{stage.name}' already registered")
        self.stages[stage.name] = stage
        logger.debug(f"Registered stage: {stage.name}")

    def resolve_execution_order(self) -> List[str]:
        """Kahn topological sort; among ready stages the lowest priority value runs first.

        Raises:
            ValueError: On unknown dependencies or a dependency cycle
        """
        in_degree = {name: 0 for name in self.stages}
        graph: Dict[str, List[str]] = {name: [] for name in self.stages}
        for name, stage in self.stages.items():
            for dep in stage.dependencies:
                if dep not in self.stages:
                    raise ValueError(f"Stage '{name}' depends on unknown stage '{dep}'")
                graph[dep].append(name)
                in_degree[name] += 1

        queue = [name for name in self.stages if in_degree[name] == 0]
        result = []
        while queue:
            queue.sort(key=lambda n: self.stages[n].priority.value)
            node = queue.pop(0)
            result.append(node)
            for neighbor in graph[node]:
                in_degree[neighbor] -= 1
                if in_degree[neighbor] == 0:
                    queue.append(neighbor)

        if len(result) != len(self.stages):
            raise ValueError("Circular dependency detected in stage chain")
        return result

    def execute(self, context: ContextT) -> List[StageResult]:
        """Run every enabled stage once; dependents of failed or skipped stages are skipped."""
        self.execution_order = self.resolve_execution_order()
        results: List[StageResult] = []
        for name in self.execution_order:
            stage = self.stages[name]
            if not stage.enabled:
                logger.debug(f"Skipping disabled stage: {name}")
                stage.state = StageState.SKIPPED
                continue
            blocked = [d for d in stage.dependencies if self.stages[d].state != StageState.COMPLETED]
            if blocked:
                stage.state = StageState.SKIPPED
                logger.warning(f"Skipping stage {name}: dependencies {blocked} did not complete")
                results.append(StageResult(stage=name, success=False, message="skipped", error=f"blocked by {blocked}"))
                continue
            if not stage.validate_config(context):
                stage.state = StageState.FAILED
                results.append(StageResult(stage=name, success=False, message="invalid configuration", error="validate_config failed"))
                continue

            logger.info(f"Executing stage: {name}")
            stage.state = StageState.RUNNING
            started = time.perf_counter()
            with logger.contextualize(stage=name):
                try:
                    result = stage.run(context)
                except RigTrackError as e:
                    logger.error(f"Stage {name} failed: {e}")
                    result = StageResult(stage=name, success=False, message="error", error=str(e))
            elapsed = time.perf_counter() - started

            stage.metrics.total_runs += 1
            stage.metrics.total_duration_seconds += elapsed
            stage.metrics.last_run_end = utc_now()
            self.run_metrics.record(name, elapsed, result.success)
            if result.success:
                stage.metrics.successful_runs += 1
                stage.state = StageState.COMPLETED
                logger.info(f"Stage {name} completed in {elapsed:.2f}s: {result.message}")
            else:
                stage.metrics.failed_runs += 1
                stage.metrics.last_error = result.error
                stage.state = StageState.FAILED
            results.append(result)
        return results
