"""Exception hierarchy shared by all acdkit modules.

The three leaf classes partition failures the same way the CLI partitions
exit codes: bad configuration or incompatible inputs (1), file problems (2),
numerical breakdown (3).
"""


class AcdkitError(Exception):
    """Base class for all errors raised by acdkit."""


class ValidationError(AcdkitError):
    """Invalid configuration, malformed spec, or incompatible dimensions."""


class DataIOError(AcdkitError):
    """Missing, unreadable, unwritable, or corrupt data files."""


class NumericalError(AcdkitError):
    """Numerical failure: singular matrix, non-convergence, degenerate data."""
