"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class LoomflowError(Exception):
    """Base class for all package-specific failures."""


class FormatError(LoomflowError):
    """A file on disk does not match its declared layout."""


class ConfigError(LoomflowError):
    """An operation was configured inconsistently (e.g. angular mode without intrinsics)."""


class DegenerateGeometryError(LoomflowError):
    """The flow geometry does not constrain the requested estimate (e.g. all vectors parallel)."""


class AlignmentError(LoomflowError):
    """Two signals could not be aligned (correlation peak below the acceptance floor)."""
