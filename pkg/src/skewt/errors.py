"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (bracketing, quadrature, non-finite value)."""


class DegenerateSampleError(ValueError):
    """The data cannot support the requested summary (e.g. zero quartile spread)."""
