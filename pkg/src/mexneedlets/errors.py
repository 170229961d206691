"""Exception hierarchy.

Every error raised on purpose by the library derives from ``NeedletError``.
The CLI maps the three families below onto distinct exit statuses.
"""


class NeedletError(Exception):
    """Base class."""


class DomainError(NeedletError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(NeedletError, ValueError):
    """Malformed input or configuration.

    ``field`` names the offending configuration key or input line, when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class RegimeError(NeedletError, ValueError):
    """Parameters fall outside the regime in which a bound or statement holds."""


class TruncationError(NeedletError, ArithmeticError):
    """A series could not be truncated within tolerance before its cap."""


class ResourceError(NeedletError, MemoryError):
    """A request would exceed a configured size cap."""


class DegenerateError(NeedletError, ArithmeticError):
    """Statistics are undefined: zero variance, underflow, singular matrix."""
