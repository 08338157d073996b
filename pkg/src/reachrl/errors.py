"""Exception types shared across the package.

The CLI maps ValidationError and LifecycleError to exit code 1 (user /
configuration errors) and everything else to exit code 2 (runtime failures).
"""


class ReachError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ReachError):
    """Bad inputs: dimension mismatches, out-of-domain values, unknown IDs."""


class LifecycleError(ReachError):
    """Operation attempted at the wrong time (e.g. stepping a finished episode)."""


class NumericError(ReachError):
    """Non-finite values encountered during training; the run aborts cleanly."""

    def __init__(self, message, training_log=None):
        super().__init__(message)
        self.training_log = training_log


class CorruptDataError(ReachError):
    """Persisted data (CSV/JSON) is malformed; never silently repaired."""
