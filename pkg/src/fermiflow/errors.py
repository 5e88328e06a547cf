"""Exception types raised across the package."""


class FermiFlowError(Exception):
    """Base class for all package errors."""


class InvalidInput(FermiFlowError, ValueError):
    pass


class SingularMatrix(FermiFlowError, ArithmeticError):
    """Raised when a matrix is too close to singular to invert.

    ``condition`` holds the ratio of largest to smallest absolute eigenvalue.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NoBracket(FermiFlowError, ValueError):
    pass


class BlowUpDetected(FermiFlowError, ArithmeticError):
    """Raised by :func:`fermiflow.numerics.rk4_integrate` on non-finite state.

    ``r`` and ``y`` hold the partial trajectory up to the last finite sample.
    """

    def __init__(self, message, r, y):
        super().__init__(message)
        self.r = r
        self.y = y

    @property
    def last_r(self):
        return float(self.r[-1])


class OutOfRange(FermiFlowError, ValueError):
    pass


class OutOfDomain(FermiFlowError, ValueError):
    pass


class HypothesisViolated(FermiFlowError, ValueError):
    pass
