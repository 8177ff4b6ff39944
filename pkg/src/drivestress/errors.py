"""Exception types for the pipeline.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class DriveStressError(Exception):
    """Base class for all pipeline errors."""

    exit_code = EXIT_DATA


class InvalidParameterError(DriveStressError):
    """A parameter is outside its valid range (e.g. cutoff above Nyquist)."""

    exit_code = EXIT_USAGE


class ShapeError(DriveStressError):
    """Array dimensions do not line up."""


class EmptyInputError(DriveStressError):
    """An operation received an empty trace or segment."""


class DegenerateRangeError(DriveStressError):
    """Min-max normalization hit a constant trace (likely sensor failure)."""

    def __init__(self, message: str, constant_value: float):
        super().__init__(message)
        self.constant_value = constant_value


class TimestampError(DriveStressError):
    """Timestamps are not strictly increasing or have undeclared gaps."""


class InsufficientDataError(DriveStressError):
    """Too few samples for the requested statistic."""


class AmbiguousLabelError(DriveStressError):
    """A window straddles annotation conditions with no majority."""


class UnlabeledError(DriveStressError):
    """A window falls outside every annotated segment."""


class InvalidScoreError(DriveStressError):
    """A subjective score lies outside [0, 1]."""


class MissingClassError(DriveStressError):
    """A binary operation received data from a single class."""


class MissingProfileError(DriveStressError):
    """A drive has no high-stress training instances to build a profile from."""


class DegenerateGraphError(DriveStressError):
    """The similarity graph has an isolated vertex."""

    exit_code = EXIT_NUMERICAL


class ClusteringFailureError(DriveStressError):
    """k-means produced an empty cluster in every restart."""

    exit_code = EXIT_NUMERICAL


class IllConditionedError(DriveStressError):
    """A linear system stayed singular after diagonal jitter."""

    exit_code = EXIT_NUMERICAL


class StratificationError(DriveStressError):
    """A class is smaller than the requested fold count."""


class UnassignedDriveError(DriveStressError):
    """Prediction requested for a drive absent from the task assignment."""


class SchemaError(DriveStressError):
    """A file does not match its documented layout; message includes a diff."""
