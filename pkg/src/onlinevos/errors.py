"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array shapes or channel counts do not line up."""


class DegenerateMaskError(ValueError):
    """A mask is empty or covers every pixel where that is not allowed."""


class InputError(ValueError):
    """Invalid user-supplied annotations or configuration."""


class FormatError(ValueError):
    """A file does not follow its declared on-disk format."""

    def __init__(self, path, offset, expected):
        self.path = str(path)
        self.offset = offset
        self.expected = expected
        super().__init__(f"{self.path}: byte {offset}: expected {expected}")


class NumericalBreakdownError(ArithmeticError):
    """An iterative solver produced non-finite values."""


class GenerationError(RuntimeError):
    """A synthetic scene could not be laid out under its constraints."""
