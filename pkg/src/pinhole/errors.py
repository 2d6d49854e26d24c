"""Exception hierarchy.

The three families map onto the command-line exit codes: configuration
problems (1), bad input data (2) and numerical failures (3).
"""


class PinholeError(Exception):
    pass


class ConfigError(PinholeError, ValueError):
    """Invalid configuration or parameter value."""


class DataError(PinholeError, ValueError):
    """Input data violates a format or content contract."""


class EmbeddingFormatError(DataError):
    """Malformed embedding CSV. ``row`` is the 1-based data row (0 = header)."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"{message} at row {row}"
        super().__init__(message)


class EmptySetError(DataError):
    pass


class DegenerateScatterError(DataError):
    """Too few speakers or utterances for a meaningful scatter analysis."""


class NumericalError(PinholeError, ArithmeticError):
    """A linear-algebra step failed (singular or indefinite matrix)."""
