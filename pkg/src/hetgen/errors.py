"""Exception types shared across the package."""


class HetgenError(Exception):
    """Base class for all package errors."""


class DomainError(HetgenError, ValueError):
    """An argument lies outside the domain of a function."""


class InfeasibleError(HetgenError):
    """No mixing-coefficient matrix satisfies the requested constraints."""

    def __init__(self, M, K, r, residual=None):
        self.M, self.K, self.r, self.residual = M, K, r, residual
        msg = f"no feasible banded alpha matrix for (M={M}, K={K}, r={r})"
        if residual is not None:
            msg += f" (residual {residual:.3g})"
        super().__init__(msg)


class ConfigError(HetgenError, ValueError):
    """A run configuration is missing keys or carries invalid values."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class EnumerationLimitError(HetgenError):
    """An exact enumeration would exceed its size cap."""
