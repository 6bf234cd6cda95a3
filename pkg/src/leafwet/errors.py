"""Exception types shared across the pipeline."""


class LeafwetError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LeafwetError, ValueError):
    """An argument is outside the domain the operation accepts."""


class StateError(LeafwetError, RuntimeError):
    """An object is in the wrong processing state (e.g. compensated twice)."""


class ConfigError(LeafwetError, ValueError):
    """Configuration is malformed, inconsistent or references missing files."""


class DataError(LeafwetError, ValueError):
    """A file on disk is corrupt, truncated or has the wrong layout."""


class NumericError(LeafwetError, ArithmeticError):
    """A NaN or Inf showed up where finite values are required."""


class StratificationError(LeafwetError, ValueError):
    """Fold assignment cannot keep both classes represented."""
