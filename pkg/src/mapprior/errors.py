"""Exception types shared across the package.

The CLI maps these onto stable exit codes: usage errors exit 1, data errors
exit 2, numeric failures exit 3.
"""


class MapPriorError(Exception):
    """Base class for all package errors."""


class UsageError(MapPriorError):
    """Bad command-line arguments or malformed flag values."""


class DataError(MapPriorError):
    """Invalid input data: broken invariants, schema violations, shape mismatches."""


class NumericError(MapPriorError):
    """Non-finite values or numeric divergence during computation."""
