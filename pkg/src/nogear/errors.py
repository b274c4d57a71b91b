"""Exception and warning types raised across the package."""


class NogearError(Exception):
    """Base class for package errors."""


class ConstraintViolation(NogearError, ValueError):
    """Model parameters fall outside the admissible region."""


class TruncationTooSevere(NogearError):
    """A truncated transition matrix discards too much probability mass."""


class OriginOutOfRange(NogearError, IndexError):
    """Forecast origin lies beyond the truncation bound."""


class DegenerateSeries(NogearError, ValueError):
    """Series carries no transition information (e.g. constant)."""


class AiccUndefined(NogearError, ValueError):
    """Corrected AIC denominator is non-positive."""


class LengthMismatch(NogearError, ValueError):
    """Paired sequences have different lengths."""


class NonConvergenceWarning(UserWarning):
    """Optimizer stopped before meeting its tolerance."""


class TruncationWarning(UserWarning):
    """Forecast origin row lost noticeable mass to truncation."""
