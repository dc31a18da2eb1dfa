"""Exception types shared across the package.

The CLI maps ``ConfigError`` to exit code 1 and ``DivergenceError`` /
``FormatError`` / ``OSError`` to exit code 2.
"""


class ConfigError(ValueError):
    """Invalid configuration or unsupported parameter value."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(RuntimeError):
    """A caller violated a documented precondition."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite or exploding loss.

    ``log`` carries the records collected before the abort so they can be
    flushed to disk.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class FormatError(ValueError):
    """Binary file could not be parsed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass
