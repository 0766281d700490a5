"""Exception hierarchy shared by every module in the package."""


class CoattnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CoattnError):
    """Tensor shapes are incompatible for the requested operation."""


class UsageError(CoattnError):
    """An operation was called in a way its contract forbids."""


class DegenerateInputError(CoattnError):
    """Input is structurally empty (no sentences, fully masked row, ...)."""


class EncodingError(CoattnError):
    """A token id is outside the vocabulary."""


class ParseError(CoattnError):
    """A data file is malformed; the message carries the line number."""


class ValidationError(CoattnError):
    """A value violates a declared range or size constraint."""


class NumericError(CoattnError):
    """A non-finite value appeared where the math requires finite ones."""


class ConfigError(CoattnError):
    """A run configuration is missing, unreadable, or inconsistent."""


class CheckpointError(CoattnError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint header declares an unsupported format version."""


class CheckpointShapeError(CheckpointError):
    """A stored parameter does not match its declared shape."""


class CheckpointTruncatedError(CheckpointError):
    """The checkpoint file ends before all declared content was read."""
