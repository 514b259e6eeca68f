class ShapeError(ValueError):
    """Array dimensions do not agree."""


class NumericError(ArithmeticError):
    """A value that must be finite is not."""
