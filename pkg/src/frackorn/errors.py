"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Raised when an argument is outside its admissible range."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values."""
