"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad grid, inconsistent Hamiltonian, malformed scenario file."""


class DomainError(ValueError):
    """A requested geometric object (path, point) leaves the computational domain."""


class InputError(ValueError):
    """Input data violates a precondition, e.g. a non-uniform time series."""


class PropagationError(RuntimeError):
    """Time stepping or ground-state iteration failed.

    ``residual`` carries the last linear-solve residual (or energy trace) when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CausticError(RuntimeError):
    """Operation refused because characteristics have crossed."""


class UnwrapWarning(UserWarning):
    """Phase unwrapping crossed points where the density is below the floor."""
