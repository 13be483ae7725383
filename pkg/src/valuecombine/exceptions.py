"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit status 1);
``ComputationError`` subclasses signal inputs that are well-formed but
numerically degenerate (CLI exit status 2).
"""


class ValueCombineError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ValidationError(ValueCombineError, ValueError):
    pass


class ComputationError(ValueCombineError, ArithmeticError):
    pass


class InvalidParam(ValidationError):
    pass


class InvalidWeights(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class LambdaOutOfRange(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class EmptyTable(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class ZeroDenominator(ComputationError):
    pass


class SingularCovariance(ComputationError):
    pass


class DegenerateDenominator(ComputationError):
    pass


class RankDeficient(ComputationError):
    pass


class NotPSD(ComputationError):
    pass


class InfeasibleWeights(ComputationError):
    """Observed weights admit no finite, positive precision ratios.

    ``limit`` names the degenerate sigma implied by the boundary weight,
    e.g. ``"sigma_i -> inf"`` when the intrinsic weight is zero.
    """

    def __init__(self, message, field=None, limit=None):
        super().__init__(message, field=field)
        self.limit = limit
