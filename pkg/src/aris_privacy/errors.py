"""Exception hierarchy shared by every module of the package."""


class ArisError(Exception):
    """Base class for all package errors."""


class DomainError(ArisError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InfeasibleError(ArisError):
    """A power budget or threshold cannot be met.

    ``margin`` carries the offending quantity (negative or zero) so callers
    can report how far from feasibility the instance is.
    """

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class NumericalError(ArisError):
    """An iterative numerical routine failed (e.g. a bisection did not bracket)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularityError(ArisError):
    """A Fisher information matrix is rank deficient."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class UnidentifiableError(ArisError):
    """Fewer observations than unknown parameters."""


class ConfigError(ArisError, ValueError):
    """Malformed or unknown configuration entry."""
