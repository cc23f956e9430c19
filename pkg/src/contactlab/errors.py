"""Exception types shared across the package."""


class ContactLabError(Exception):
    """Base class for all package errors."""


class SpaceError(ContactLabError, ValueError):
    """Malformed state-space description (bad weights, duplicates, empty)."""


class ModelError(ContactLabError, ValueError):
    """Malformed rate model (shape mismatch, negative rates, unknown form)."""


class ConvergenceError(ContactLabError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class ReducibleKernelError(ConvergenceError):
    """Power iteration produced an eigenvector with entries at the positivity floor."""


class DivergenceError(ContactLabError, RuntimeError):
    """A time integral failed to converge (recurrent / non-transient model).

    Carries growth diagnostics in ``.diagnostics``.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ContactLabError, ValueError):
    """Invalid experiment or model configuration file."""
