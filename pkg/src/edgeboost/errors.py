class EdgeBoostError(Exception):
    """Base class for all errors raised by this package."""


class ModelCorruptionError(EdgeBoostError):
    """A model violates its structural invariants."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class FormatError(ModelCorruptionError):
    """A serialized model has bad magic, an unknown version or is truncated."""


class DimensionError(EdgeBoostError, ValueError):
    """Feature vector or matrix has the wrong shape."""


class ParameterError(EdgeBoostError, ValueError):
    """Invalid configuration or physical parameters."""


class DataError(EdgeBoostError, ValueError):
    """Malformed or unusable input data."""
