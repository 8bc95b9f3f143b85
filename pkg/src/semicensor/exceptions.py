"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class ValidationError(ValueError):
    """A model component violates one of its validity conditions."""


class ExplosionError(RuntimeError):
    """A simulated jump process exceeded its jump ceiling."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class QuadratureError(RuntimeError):
    """Numerical integration failed to reach the requested tolerance."""


class SamplingError(RuntimeError):
    """A rejection sampler exhausted its iteration budget."""


class ConvergenceError(RuntimeError):
    """An optimizer exhausted its iteration budget."""
