class FormatError(ValueError):
    """Malformed or truncated input file / model stream."""


class NumericError(ArithmeticError):
    """A numerical routine produced NaN/Inf or failed to converge."""
