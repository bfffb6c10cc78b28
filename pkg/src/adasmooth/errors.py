"""Exception hierarchy for adasmooth.

Every error raised on purpose by this package derives from :class:`AdaSmoothError`,
so callers can catch one type. Diagnostic *flags* (sign flips, clamped predictions,
floored propensities, ...) are not exceptions; they travel on result objects.
"""

__all__ = [
    "AdaSmoothError",
    "SplitTooSmall",
    "InvalidProportions",
    "EmptySample",
    "SchemaMismatch",
    "NonPositiveBandwidth",
    "QuadratureFailure",
    "UnsupportedOrder",
    "InfeasibleAnchors",
    "NoLinearRegion",
    "LogOfZero",
    "DegenerateRateDenominator",
    "InvalidAlpha",
    "InvalidWidthExponent",
    "NonBinaryOutcome",
    "FluctuationDiverged",
    "ConfigError",
    "StageError",
    "PropensityUnderflow",
]


class AdaSmoothError(Exception):
    """Base class for all adasmooth errors."""


class SplitTooSmall(AdaSmoothError):
    """A sample split would leave one of the three subsamples below its minimum size."""


class InvalidProportions(AdaSmoothError):
    """Split proportions must satisfy 0 < p1 < p2 < 1."""


class EmptySample(AdaSmoothError):
    """An empirical moment was requested on an empty (or too short) sample."""


class SchemaMismatch(AdaSmoothError):
    """Dataset schema does not match what the operation or family expects."""


class NonPositiveBandwidth(AdaSmoothError):
    """Kernel smoothing level must be strictly positive."""


class QuadratureFailure(AdaSmoothError):
    """A kernel integral failed its accuracy check."""


class UnsupportedOrder(AdaSmoothError):
    """Requested kernel order is not available (only 2 and 4 are)."""


class InfeasibleAnchors(AdaSmoothError):
    """Anchor smoothing levels are degenerate or out of the feasible range."""


class NoLinearRegion(AdaSmoothError):
    """The log-log diagnostic grid contains no usable linear window."""


class LogOfZero(AdaSmoothError):
    """A rate estimate would take the log of an exactly-zero magnitude."""


class DegenerateRateDenominator(AdaSmoothError):
    """The rate combination 2*beta - 1 + gamma - nu is not positive."""


class InvalidAlpha(AdaSmoothError):
    """Confidence level alpha must lie strictly between 0 and 1."""


class InvalidWidthExponent(AdaSmoothError):
    """The CI width exponent 1/2 - (r+eps)*gamma is not positive; the selection is rejected."""


class NonBinaryOutcome(AdaSmoothError):
    """The targeted-update variant requires outcomes in {0, 1}."""


class ConfigError(AdaSmoothError):
    """Invalid or unknown configuration key/value."""


class StageError(AdaSmoothError):
    """Wraps an upstream error with the pipeline stage where it occurred."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class PropensityUnderflow(UserWarning):
    """Warning category: exposure-density values below the floor were clipped.

    Not an exception — the offending values are floored at 1e-6 and counted on
    the evaluator's diagnostics.
    """


class FluctuationDiverged(UserWarning):
    """Warning category: the fluctuation parameter left its trust region (|eps| > 10).

    Not an exception — the targeted update stops at the trust-region boundary,
    returns the best fit found, and sets the ``diverged`` flag on its report.
    """
