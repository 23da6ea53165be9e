"""Exception types shared across the library."""


class NadiError(Exception):
    """Base class for all library-specific errors."""


class InvalidInputError(NadiError, ValueError):
    """Raised when numeric input is non-finite or otherwise ill-formed."""


class ShapeError(NadiError, ValueError):
    """Raised on array dimension mismatches."""


class StabilityError(NadiError):
    """Raised when a matrix fails a required stability property."""


class DivergenceError(NadiError):
    """Raised when the integrated state blows up.

    Carries the simulation time at which divergence was detected.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g} s)")
        self.time = time


class EvaluationError(NadiError):
    """Raised when a model evaluation returns non-finite values."""


class ConfigurationError(NadiError, ValueError):
    """Raised on invalid scenario, gain, or reference configuration."""


class TrimError(NadiError):
    """Raised when no trim solution exists inside the allowed envelope."""


class SingularityError(NadiError):
    """Raised when the flight state reaches a kinematic singularity."""


class RankError(NadiError):
    """Raised when a matrix is rank-deficient where full rank is required."""


class OracleFailureError(NadiError):
    """Raised when the validation root-finder fails to converge."""
