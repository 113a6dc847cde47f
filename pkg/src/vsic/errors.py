"""Exception hierarchy shared across the package.

``InputError`` and its subclasses mark problems with user-supplied files or
configuration (the CLI maps them to exit code 2); everything else derived
from ``VsicError`` is an analysis failure (exit code 1).
"""


class VsicError(Exception):
    """Base class for all package errors."""


class InputError(VsicError):
    """Invalid user input: bad config, malformed file, missing path."""


class ConfigError(InputError):
    """Configuration dictionary violates the schema."""


class ParseError(InputError):
    """A data file failed to parse; carries file and line context."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class NoPeakError(VsicError):
    """A spectrum contains no peak above the noise floor."""
