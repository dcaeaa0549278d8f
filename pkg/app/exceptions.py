"""
Error hierarchy for the smoothing engine.

Input problems subclass ValueError so callers that only know about ValueError
still catch them.
"""


class SopSplineError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(SopSplineError, ValueError):
    """A model specification violates one of its invariants."""


class DomainError(SopSplineError, ValueError):
    """Evaluation points fall outside the basis domain."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DataError(SopSplineError, ValueError):
    """Response, covariate or weight data are unusable (non-finite, wrong length)."""


class DegenerateDataError(DataError):
    """The data carry no information to fit (e.g. an all-zero count response)."""


class RankError(SopSplineError, ValueError):
    """The fixed-effects block or the penalized system is singular."""


class EvaluationError(SopSplineError):
    """A dense likelihood evaluation hit a singular matrix."""


class InputFileError(SopSplineError, ValueError):
    """A CSV input could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
