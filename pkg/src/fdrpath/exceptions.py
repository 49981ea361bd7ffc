"""Exception hierarchy shared across the package."""


class FdrPathError(Exception):
    """Base class for all package-specific errors."""


class DataError(FdrPathError):
    """Invalid or unusable input data (shape, NaN/Inf, missing columns)."""


class RankDeficiencyError(FdrPathError):
    """A design matrix lost full column rank.

    ``column`` names the offending (0-based) column when identifiable.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConvergenceError(FdrPathError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, kkt_residual=None):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class SeparationError(FdrPathError):
    """Unpenalized logistic fit is unbounded (perfectly separable data)."""


class DegeneratePathError(FdrPathError):
    """Exact path construction hit a tie or singular update.

    Callers should fall back to Monte-Carlo evaluation for the affected
    hypothesis; generic-position inputs never raise this.
    """


class CalibrationError(FdrPathError):
    """Signal-strength calibration could not bracket the target."""


class EstimationError(FdrPathError):
    """A sub-computation failed; carries (hypothesis, tuning) context."""

    def __init__(self, message, hypothesis=None, tuning=None):
        super().__init__(message)
        self.hypothesis = hypothesis
        self.tuning = tuning
