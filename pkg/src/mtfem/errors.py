"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class UnsupportedError(NotImplementedError):
    pass


class InvalidMeshError(ValueError):
    pass


class InternalError(RuntimeError):
    pass


class ConditioningError(ArithmeticError):
    """A dense construction system is too ill-conditioned to trust.

    Attributes
    ----------
    cond : float
        Estimated 2-norm condition number of the offending matrix.
    context : str
        What was being built.
    """

    def __init__(self, message, cond=float("nan"), context=""):
        super().__init__(message)
        self.cond = cond
        self.context = context


class UnisolvenceError(ArithmeticError):
    """The generalized Vandermonde matrix of a cell is (numerically) singular."""

    def __init__(self, message, cell=-1, cond=float("nan"), smallest_singular_value=float("nan")):
        super().__init__(message)
        self.cell = cell
        self.cond = cond
        self.smallest_singular_value = smallest_singular_value


class CordesViolation(ValueError):
    """The coefficient fails the Cordes condition at some sample point."""

    def __init__(self, message, epsilon=float("nan")):
        super().__init__(message)
        self.epsilon = epsilon


class SolverError(RuntimeError):
    """Linear solve failed.

    ``smallest_pivot`` is set for direct factorizations, ``residuals`` holds
    the residual history of an iterative run.
    """

    def __init__(self, message, smallest_pivot=float("nan"), residuals=()):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot
        self.residuals = list(residuals)
