"""Exception hierarchy shared by the engine, the exact solvers and the CLI."""


class FKError(Exception):
    """Base class for every error raised by :mod:`fkdmc`."""

    exit_code = 1


class ConfigError(FKError, ValueError):
    """Invalid model or run configuration; ``field`` names the culprit."""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ExtinctionError(FKError):
    """Every walker carries a numerically zero potential."""

    exit_code = 3

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"all potentials vanished at step {step}")


class ConvergenceError(FKError):
    """A fixed-point iteration did not reach its tolerance."""

    exit_code = 4

    def __init__(self, message, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")


class StableKNotFound(FKError):
    """No k-step model up to ``k_max`` passes the contraction test."""

    exit_code = 5

    def __init__(self, k_max, min_eigenvalues):
        self.k_max = k_max
        self.min_eigenvalues = list(min_eigenvalues)
        super().__init__(f"no stable k <= {k_max}; min eig of S_k - A_k'S_kA_k: {self.min_eigenvalues}")


class NonIntegrableError(FKError, ValueError):
    """The exponential quadratic is not integrable against the kernel."""


class PropagationError(FKError):
    """A kernel produced a non-finite walker position."""

    def __init__(self, step, walker):
        self.step = step
        self.walker = walker
        super().__init__(f"non-finite position for walker {walker} at step {step}")


class NumericalError(FKError, ArithmeticError):
    """Ill-conditioned linear algebra inside a closed-form map."""
