"""Exception hierarchy shared across the package."""


class RadmaxError(Exception):
    """Base class for all library errors."""


class InvalidInputError(RadmaxError, ValueError):
    pass


class UnsupportedSpaceError(RadmaxError, TypeError):
    pass


class ResourceError(RadmaxError, MemoryError):
    pass


class SolverFailure(RadmaxError, ArithmeticError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResolventFailure(RadmaxError, ArithmeticError):
    """``I + it*Pi_B`` (or a contour resolvent) could not be inverted reliably."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class DivergenceError(RadmaxError, ArithmeticError):
    pass
