"""Exception hierarchy shared by all modules."""


class Ch2WaveError(Exception):
    """Base class for every error raised by the package."""


class DomainError(Ch2WaveError, ValueError):
    """Parameters or arguments outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Evaluation at a pole of the first integral."""

    def __init__(self, message, location):
        super().__init__(message)
        self.location = location


class UnsupportedClassError(DomainError):
    """An operation defined for smooth waves was given a peaked or cusped one."""


class SingularityError(DomainError):
    """c - phi too close to zero for the eta relation to be evaluated."""


class StepSizeError(DomainError):
    """A finite-difference stencil in c crossed a wave-class boundary."""


class AssemblyError(DomainError):
    """A linearized operator lost ellipticity on the grid."""


class ConfigurationError(Ch2WaveError, ValueError):
    """Invalid run or experiment configuration."""


class QuadratureError(Ch2WaveError, RuntimeError):
    """Adaptive quadrature or eigen-iteration did not converge."""


class NumericalAbort(Ch2WaveError, RuntimeError):
    """A time integration produced non-finite values."""
