class DiffusiaError(Exception):
    """Base class for every error raised by the package."""


class DomainError(DiffusiaError, ValueError):
    """A model function was evaluated outside its mathematical domain."""


class ValidationError(DiffusiaError, ValueError):
    """Input data or configuration failed validation."""


class IntegrationError(DiffusiaError, RuntimeError):
    """The RK4 oracle left the admissible envelope."""


class RefinementError(DiffusiaError, RuntimeError):
    """A seasonal ARMA refinement could not be fitted or was rejected."""
