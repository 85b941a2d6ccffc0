"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (singular matrix, exhausted subsets, ...)."""


class InvariantViolation(RuntimeError):
    """A mathematically guaranteed property was observed to fail.

    Raising this means there is a bug, not bad input.
    """


class NonUniqueSolutionWarning(UserWarning):
    """No eigenvalue gap at position k: the trace-ratio subspace is not unique."""


class SingularMatrixWarning(UserWarning):
    pass
