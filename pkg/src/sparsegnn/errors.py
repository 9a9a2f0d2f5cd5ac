"""Exception types shared across the engine.

The CLI maps these onto exit codes: InputError -> 1, NumericalError -> 2.
"""


class InputError(ValueError):
    """Malformed or inconsistent input (bad graph, bad bundle, bad config)."""


class NumericalError(RuntimeError):
    """A numerical contract was violated (divergence, non-convergence, residual)."""


class SingularMatrixError(NumericalError):
    """Dense factorization hit a pivot below the singularity threshold."""


class ConvergenceError(NumericalError):
    """Iterative solver failed to converge within its iteration budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual
