"""Exception hierarchy shared by the services, the CLI and the HTTP routes.

Every error carries a human-readable ``reason``, a stable ``code`` used in
JSON error payloads, and the process ``exit_code`` the CLI maps it to.
"""

from __future__ import annotations

from typing import Optional


class CoastError(Exception):
    """Base class for all domain errors."""

    code = "COAST_ERROR"
    exit_code = 2

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class InvalidInputError(CoastError):
    """Input data is malformed (non-finite values, bad shapes, duplicate ids)."""

    code = "INVALID_INPUT"


class InvalidArgumentError(CoastError):
    """A parameter is outside its allowed range."""

    code = "INVALID_ARGUMENT"


class DimensionMismatchError(InvalidArgumentError):
    code = "DIMENSION_MISMATCH"


class TooSmallError(CoastError):
    """The input has fewer points than one partition needs."""

    code = "TOO_SMALL"

    def __init__(self, reason: str, size: int = 0, required: int = 0):
        self.size = size
        self.required = required
        super().__init__(reason)


class NodataUnsupportedError(CoastError):
    code = "NODATA_UNSUPPORTED"


class GeometryRangeError(CoastError):
    """Coordinates too close to a pole for the Mercator ordinate."""

    code = "RANGE_ERROR"


class UnclosableDomainError(CoastError):
    code = "UNCLOSABLE_DOMAIN"

    def __init__(self, reason: str, lines: Optional[list[str]] = None):
        self.lines = lines or []
        super().__init__(reason)


class GeoParseError(CoastError):
    """A GeoJSON, ESRI ASCII grid or mesh-generator file could not be parsed."""

    code = "PARSE_ERROR"

    def __init__(self, reason: str, offset: Optional[int] = None):
        self.offset = offset
        super().__init__(reason)


class NumericalFailureError(CoastError):
    """The eigensolver did not converge within its sweep cap."""

    code = "NUMERICAL_FAILURE"
    exit_code = 3

    def __init__(self, reason: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(reason)
