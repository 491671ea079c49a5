"""Exception types shared across the package."""


class MetaOptError(Exception):
    pass


class NotHermitian(MetaOptError, ValueError):
    pass


class IndefiniteMatrix(MetaOptError, ValueError):
    pass


class DimensionMismatch(MetaOptError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class DegenerateSpread(MetaOptError, ValueError):
    pass


class InconsistentGrouping(MetaOptError, ValueError):
    pass


class RankDeficientChannel(MetaOptError, ValueError):
    pass


class NonFiniteGradient(MetaOptError, FloatingPointError):
    pass


class NonFiniteLoss(MetaOptError, FloatingPointError):
    """Raised when a loss evaluates to NaN/Inf.

    ``iteration`` is the optimizer iteration at which it happened (``None``
    outside an optimization loop).
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(MetaOptError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class DisconnectedParameter(UserWarning):
    """A parameter slot had no path to the loss; its gradient is zero."""
