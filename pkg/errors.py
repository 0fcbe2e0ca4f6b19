# errors.py


class RoughPathError(Exception):
    """Base class of every error raised by the toolkit."""


class InvalidGridError(RoughPathError, ValueError):
    """Grid instants are not strictly increasing, or too few of them."""


class DimensionMismatchError(RoughPathError, ValueError):
    """Operands live in incompatible spaces."""


class YoungConditionError(RoughPathError):
    """1/p + 1/q <= 1: the Young integral is not defined."""


class RegimeError(RoughPathError):
    """A sewing exponent or the index p falls outside the admissible regime."""


class InsufficientRegularityError(RoughPathError):
    """A vector field does not carry enough analytic derivatives."""


class DivergenceError(RoughPathError):
    """A Picard iteration failed even on the smallest admissible window."""


class InsufficientDataError(RoughPathError):
    """Not enough samples for a fit."""


class ConfigError(RoughPathError, ValueError):
    """Invalid run configuration or spec string."""
