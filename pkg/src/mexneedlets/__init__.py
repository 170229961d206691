"""Correlation analysis of Mexican and standard needlet coefficients on the sphere."""

from .errors import (
    DegenerateError,
    DomainError,
    NeedletError,
    RegimeError,
    ResourceError,
    TruncationError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateError",
    "DomainError",
    "NeedletError",
    "RegimeError",
    "ResourceError",
    "TruncationError",
    "ValidationError",
    "__version__",
]
