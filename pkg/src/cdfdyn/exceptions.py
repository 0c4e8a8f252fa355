"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numerical 4), so
library code should raise the most specific one that applies.
"""


class CdfdynError(Exception):
    """Base class for package errors."""


class ConfigError(CdfdynError, ValueError):
    """Invalid configuration or arguments (bad measure parameters, lag depth, ...)."""


class DataError(CdfdynError, ValueError):
    """Input data unusable (malformed CSV, too few cycles, constant series, ...)."""


class NumericalError(CdfdynError, RuntimeError):
    """Computation failed for numerical reasons."""


class EigenDegeneracyError(NumericalError):
    """An eigenpair failed the residual check (degenerate operator sample)."""


class NegativeVarianceError(NumericalError):
    """Variance functional of a signed CDF combination came out negative.

    Carries the offending value; callers can fall back to the monotonized
    variance, which is nonnegative by construction.
    """

    def __init__(self, variance: float, message: str | None = None):
        self.variance = variance
        if message is None:
            message = (
                f"variance functional is negative ({variance:.6g}); the fitted "
                "combination is not a CDF here, consider the monotonized fallback"
            )
        super().__init__(message)
