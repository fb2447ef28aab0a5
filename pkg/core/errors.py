"""Error hierarchy shared by every rigtrack package.

All failures that callers are expected to handle derive from RigTrackError so the
CLI can turn them into a one-line message and a nonzero exit status.
"""

from pathlib import Path
from typing import Optional, Union


class RigTrackError(Exception):
    """Base class for all rigtrack errors."""


class InvalidDepthError(RigTrackError, ValueError):
    """Depth value is non-finite or not strictly positive."""


class InvariantViolationError(RigTrackError, ValueError):
    """A domain type was constructed with values that break its invariants."""


class InsufficientOverlapError(RigTrackError):
    """Too few usable cross-view residuals to constrain the rig."""


class InsufficientAnchorError(RigTrackError):
    """Too few jointly valid pixels to recover the metric scale."""


class EmptyCloudError(RigTrackError):
    """A neighbourhood query was issued against an empty cloud."""


class IsolatedQueryError(RigTrackError):
    """A track query has no cloud support near its start position."""

    def __init__(self, query_id: str, distance: float, limit: float) -> None:
        self.query_id = query_id
        self.distance = distance
        self.limit = limit
        super().__init__(
            f"Query '{query_id}' is isolated: nearest cloud point at {distance:.4f} m "
            f"exceeds {limit:.4f} m"
        )


class UndefinedMetricError(RigTrackError, ValueError):
    """A metric has no frames or pixels to be evaluated on."""


class DegenerateConfigurationError(RigTrackError):
    """Point correspondences do not determine a unique transform."""


class SequenceFormatError(RigTrackError):
    """A sequence file or document could not be read.

    Args:
        path: File that failed
        reason: Human-readable explanation
    """

    def __init__(self, path: Union[str, Path], reason: str) -> None:
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class MissingFileError(SequenceFormatError):
    """A file required by the sequence layout does not exist."""

    def __init__(self, path: Union[str, Path], reason: Optional[str] = None) -> None:
        super().__init__(path, reason or "file not found")


class DimensionMismatchError(SequenceFormatError):
    """File contents disagree with declared dimensions."""


class MalformedDocumentError(SequenceFormatError):
    """A structured document failed to parse or validate."""
