"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ShapeError / NumericError -> 4.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ToolkitError):
    """Invalid configuration or violated call contract."""


class DataError(ToolkitError):
    """Malformed input data (corpus rows, vocab files, mapping files)."""


class ShapeError(ToolkitError):
    """Tensor shape mismatch; the message names the offending shapes."""


class NumericError(ToolkitError):
    """Non-finite values or a degenerate numeric condition."""
