"""Exception types shared across the pipeline."""


class LocalRecError(Exception):
    """Base class for all library errors."""


class DatasetEmpty(LocalRecError):
    """Raised when an input contains no interactions."""


class ParseError(LocalRecError):
    """Raised on a malformed input record; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DegenerateDataset(LocalRecError):
    """Raised when a point set is too small or fully duplicated to cluster."""


class InvalidK(LocalRecError):
    """Raised when a requested cluster count is infeasible."""


class EmptyCorpus(LocalRecError):
    """Raised when no trainable (center, context) pair exists."""


class EmptyTestSet(LocalRecError):
    """Raised when no user has a test interaction to score against."""


class IngestMismatch(LocalRecError):
    """Raised when ingested entity counts differ from an expected manifest."""


class ConfigError(LocalRecError):
    """Raised on an invalid configuration file or option value."""


class StageError(LocalRecError):
    """Wraps a failure inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
