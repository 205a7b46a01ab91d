"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vectors or points of incompatible length."""


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericError(ArithmeticError):
    """A non-finite value appeared in a forward or backward pass."""

    def __init__(self, message, term=None, epoch=None):
        super().__init__(message)
        self.term = term
        self.epoch = epoch


class SequencingError(ValueError):
    """Trace records appended out of order."""


class TraceParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(TraceParseError):
    """Trace file is well-formed but inconsistent with its header."""
