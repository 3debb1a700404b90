"""Exception hierarchy shared across the package.

CLI exit codes map onto these: ConfigError -> 1, DataError -> 2,
anything else raised mid-run -> 3.
"""


class WeaksupError(Exception):
    """Base class for all package errors."""


class ConfigError(WeaksupError):
    """Invalid configuration or parameters."""


class DataError(WeaksupError):
    """Malformed or inconsistent input data."""


class GraphSizeError(WeaksupError):
    """Exact enumeration requested on a graph that is too large."""


class TrainingDiverged(WeaksupError):
    """Loss became non-finite or a weight left its sane range."""


class BudgetExhausted(WeaksupError):
    """A human-query was requested past the session budget."""


class SessionStateError(WeaksupError):
    """An operation is illegal in the session's current state."""
