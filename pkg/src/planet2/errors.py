"""Exception types shared across the package."""


class Planet2Error(Exception):
    """Base class for all errors raised by this package."""


class ParseError(Planet2Error):
    """Malformed molecular or manifest input.

    Carries the 1-based line number when the offending line is known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class WeightsError(Planet2Error):
    """Bad magic, truncated payload, or inconsistent weights container."""


class ShapeError(Planet2Error):
    """Incompatible tensor shapes or unsupported rank."""


class NumericsError(Planet2Error):
    """Non-finite value produced where finiteness is required."""


class TrainingError(Planet2Error):
    """Invalid training data or a diverged optimisation run."""


class MetricError(Planet2Error):
    """Metric undefined for the given inputs (e.g. zero variance)."""
