"""Exception hierarchy shared across the package.

The CLI maps each class to a distinct process exit code; see ``lowsplat.cli``.
"""


class LowsplatError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(LowsplatError, ValueError):
    """A configuration value violates its documented constraints."""


class MissingInputError(LowsplatError, FileNotFoundError):
    """A required input file or directory does not exist."""


class DataFormatError(LowsplatError, ValueError):
    """An input file exists but its contents are malformed."""


class UnsupportedFormatError(DataFormatError):
    """An input file is in a format this package does not handle."""


class CorruptDataError(DataFormatError):
    """An input file is in a supported format but its payload is damaged."""


class DimensionMismatchError(LowsplatError, ValueError):
    """Two arrays that must share a shape do not."""


class DegenerateGeometryError(LowsplatError, ValueError):
    """Camera geometry does not admit the requested operation."""
