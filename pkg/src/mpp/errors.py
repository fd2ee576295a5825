"""Exception hierarchy."""


class MppError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(MppError, ValueError):
    """Input outside the domain of an operation (off-manifold point, |k| >= 1, ...)."""


class IntegrationError(MppError, RuntimeError):
    """Fixed-step integration drifted beyond the monitored tolerance."""

    def __init__(self, message, suggested_steps=None):
        super().__init__(message)
        self.suggested_steps = suggested_steps


class NumericalError(MppError, ArithmeticError):
    """NaN or inf produced inside a solver."""


class UnsupportedManifoldError(MppError, TypeError):
    """Operation only defined for a subset of the built-in manifolds."""


class ConfigError(MppError, ValueError):
    """Invalid run configuration or unreadable input file."""
