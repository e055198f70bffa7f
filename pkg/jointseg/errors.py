"""
Typed errors for jointseg.

Every error carries the CLI exit code it maps to. Library code raises these;
only the CLI layer turns them into exit codes and only the server turns them
into response status bytes.

Exit codes:
- 0 ok
- 2 config (also dimension, state and usage errors)
- 3 data (also coding, decode and validation errors)
- 4 protocol (transport/CRC and unknown model)
- 5 numeric divergence
"""

from typing import Optional


class JointSegError(Exception):
    """Base class for all jointseg errors."""

    exit_code = 1


class ConfigError(JointSegError):
    exit_code = 2


class DimensionError(ConfigError):
    """Tensor shapes do not line up."""


class StateError(ConfigError):
    """An object is used in a lifecycle state that does not allow it."""


class UsageError(ConfigError):
    """An API was called with arguments outside its contract."""


class DataError(JointSegError):
    exit_code = 3


class ValidationError(DataError):
    pass


class CodingError(DataError):
    """A symbol cannot be entropy-coded with the given table."""


class DecodeError(DataError):
    """A payload cannot be decoded (truncated or malformed)."""


class ProtocolError(JointSegError):
    exit_code = 4
    status = 3


class TransportError(ProtocolError):
    """Frame failed CRC or framing checks."""

    status = 1


class OversizeFrameError(TransportError):
    """A frame header declared more bytes than the receiver accepts."""

    def __init__(self, message: str, length: int) -> None:
        super().__init__(message)
        self.length = length


class UnknownModelError(ProtocolError):
    status = 2


class NumericError(JointSegError):
    exit_code = 5


class DivergenceError(NumericError):
    """Training produced a non-finite objective."""

    def __init__(self, message: str, dump_path: Optional[str] = None) -> None:
        super().__init__(message)
        self.dump_path = dump_path
