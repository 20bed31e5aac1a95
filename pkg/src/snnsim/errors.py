"""Exception hierarchy shared by every module of the package."""


class SNNError(Exception):
    """Base class for all errors raised by snnsim."""


class DimensionError(SNNError, ValueError):
    """Array shapes do not agree with a layer or connection."""


class NumericError(SNNError, ArithmeticError):
    """A non-finite value appeared in an input or in simulation state."""


class ValidationError(SNNError, ValueError):
    """An argument is outside its allowed domain."""


class ConfigError(SNNError, ValueError):
    """An experiment configuration is malformed or references unknown names."""


class DataError(SNNError, OSError):
    """A dataset file is missing, corrupt, or inconsistent."""


class EnvironmentStateError(SNNError, RuntimeError):
    """An environment was stepped in a state that does not permit it."""


class SerializationError(SNNError):
    """Base class for network file errors."""


class VersionMismatchError(SerializationError):
    """The file was written by an incompatible format version."""


class TruncatedFileError(SerializationError):
    """The file ends before all declared content was read."""


class ChecksumError(SerializationError):
    """The trailing CRC-32 does not match the file contents."""
