"""Exception hierarchy.

Exit codes used by the CLI: 1 for configuration/validation problems,
2 for data problems (parsing, degenerate inputs), 3 for backend/transport
problems.
"""


class AutojudgeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(AutojudgeError):
    """Invalid or missing configuration (paths, backend settings, flags)."""

    exit_code = 1


class DataError(AutojudgeError):
    """Invalid or degenerate input data."""

    exit_code = 2


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(DataError):
    """Parsed data violates a structural invariant."""


class DegenerateInputError(DataError):
    """Too little data to compute a statistic (e.g. quantiles on < 4 scores)."""


class UndefinedStatisticError(DataError):
    """A statistic is mathematically undefined for this input (e.g. constant ranking)."""


class RelevanceParseError(DataError):
    """A model response did not contain a usable relevance score."""


class BackendError(AutojudgeError):
    """Base class for scoring-backend failures."""

    exit_code = 3


class RequestError(BackendError):
    """The backend rejected the request (non-retryable HTTP status)."""


class TransportError(BackendError):
    """All retry attempts were exhausted without a successful response."""


class ProtocolError(BackendError):
    """The backend answered with a payload we cannot interpret."""


class ReplayMissError(BackendError):
    """A replay backend was asked for a response that is not in the cache."""
