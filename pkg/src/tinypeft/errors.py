"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
everything else -> 3.
"""


class TinyPeftError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(TinyPeftError):
    """Operand shapes do not conform for a kernel."""


class NumericError(TinyPeftError):
    """A computation produced or received non-finite values."""


class ConfigError(TinyPeftError):
    """Invalid configuration or usage."""


class DataError(TinyPeftError):
    """Malformed input data or file format."""


class StateError(TinyPeftError):
    """Operation invalid in the current object state (e.g. double merge)."""
