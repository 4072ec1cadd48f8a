"""Exception hierarchy shared by all modules."""


class FailsafeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FailsafeError, ValueError):
    """Input outside the domain where an operation is defined."""


class ParameterError(FailsafeError, ValueError):
    """Invalid or malformed physical parameters or configuration."""


class SingularityError(DomainError):
    """Euler-rate conversion or tilt compensation near its singularity."""


class InfeasibleError(FailsafeError):
    """No physically admissible equilibrium exists."""


class ConvergenceError(FailsafeError):
    """Iterative solver did not converge.

    The last residual norm is available as ``residual``.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class SynthesisError(FailsafeError):
    """LQR synthesis failed (non-stabilizable pair or divergence)."""


class FitError(FailsafeError, ValueError):
    """Least-squares identification could not produce a valid coefficient."""


class InsufficientDataError(FailsafeError, ValueError):
    """Not enough samples to evaluate a windowed quantity."""


class InvalidBaselineError(FailsafeError):
    """A sweep's unperturbed baseline scenario is itself unstable."""
