"""Exception hierarchy shared by all bbpn modules."""


class BBPNError(Exception):
    """Base class for every error raised by bbpn."""


class EmptyDatasetError(BBPNError, ValueError):
    pass


class DataConsistencyError(BBPNError, ValueError):
    """Two observations at the same (h, t) carry different values."""


class ConditioningError(BBPNError, ArithmeticError):
    """A Gram matrix could not be factorized, even after nugget escalation."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class DegenerateDataError(BBPNError, ValueError):
    """The observation vector is identically zero, so sigma^2_ML vanishes."""


class RationalBreakdownError(BBPNError, ArithmeticError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DivergenceError(BBPNError, ArithmeticError):
    """A time stepper produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BreakdownError(BBPNError, ArithmeticError):
    """An iterative eigen-solver produced a zero update."""
