"""Exception types shared across the lab.

Every public operation raises one of these instead of bare ValueError /
RuntimeError, so callers (and the CLI) can report failures uniformly.
"""


class AlignLabError(Exception):
    """Base class for all structured errors raised by alignlab."""


class ShapeMismatchError(AlignLabError):
    """Array dimensions or record shapes do not line up."""


class ZeroNormError(AlignLabError):
    """A vector with zero norm was passed where a direction is required."""


class FormatError(AlignLabError):
    """A file on disk does not match its declared format or manifest."""


class InsufficientDataError(AlignLabError):
    """Not enough candidates / spans / objects to perform the operation."""


class NonFiniteError(AlignLabError):
    """A NaN or infinity appeared where a finite value is required."""


class ConfigError(AlignLabError):
    """An invalid configuration value."""
