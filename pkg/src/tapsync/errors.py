"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented range."""


class CapacityError(ParameterError):
    """A size limit (e.g. the exact-enumeration cap) would be exceeded."""


class NumericsError(RuntimeError):
    """A numeric evaluation produced a non-finite value."""


class ConvergenceError(RuntimeError):
    """An iterative method failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class BracketError(ValueError):
    """A root-finding bracket does not contain a sign change."""


class DomainError(RuntimeError):
    """An input violates a mathematical hypothesis (e.g. spectrum crossing 0)."""
