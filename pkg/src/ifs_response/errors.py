"""Exception hierarchy shared by all modules."""


class IFSError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(IFSError, ValueError):
    """Input parameters do not describe an admissible system."""


class NonPositiveRatio(ValidationError):
    pass


class BadProbabilityVector(ValidationError):
    pass


class NotContractingOnAverage(ValidationError):
    pass


class CommonFixedPoint(ValidationError):
    pass


class DegenerateRatio(ValidationError):
    """A ratio lies within rounding distance of 1 without being exactly 1."""


class EqualRatios(ValidationError):
    pass


class UnsupportedIFS(ValidationError):
    """Operation only implemented for the two-map, equal-probability case."""


class NoExpansion(IFSError):
    """All ratios are <= 1, so the tail exponent is +inf."""


class OutOfRange(IFSError, ValueError):
    pass


class InadmissiblePerturbation(IFSError, ValueError):
    pass


class NonFiniteSample(IFSError, ArithmeticError):
    def __init__(self, message, seed_id=None):
        super().__init__(message)
        self.seed_id = seed_id


class DegenerateDistribution(IFSError):
    pass


class MomentDiverges(IFSError, ArithmeticError):
    pass


class OrderTooLarge(IFSError, ValueError):
    pass


class EnumerationTooLarge(IFSError):
    pass


class NoFeasibleM(IFSError):
    def __init__(self, message, smallest_feasible=None):
        super().__init__(message)
        self.smallest_feasible = smallest_feasible


class RegimeViolation(UserWarning):
    """Emitted when a response computation runs outside its validity regime."""
