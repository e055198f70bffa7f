"""
Framing shared by the server and the clients.

    frame    := length u32 (big-endian) + payload
    request  := BitstreamContainer bytes
    response := status u8, H u32, W u32, run-length-coded mask

Status codes: 0 ok, 1 CRC/framing error, 2 unknown model, 3 internal error.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Optional

from ..errors import OversizeFrameError, ProtocolError, TransportError, UnknownModelError

FRAME_HEADER = struct.Struct(">I")
DRAIN_CHUNK = 1 << 16
RESPONSE_HEADER = struct.Struct(">BII")
MAX_FRAME_BYTES = 64 << 20


class Status(IntEnum):
    OK = 0
    CRC = 1
    UNKNOWN_MODEL = 2
    INTERNAL = 3


def error_for_status(status: int, detail: str = "") -> ProtocolError:
    message = f"server answered status {status}" + (f": {detail}" if detail else "")
    if status == Status.CRC:
        return TransportError(message)
    if status == Status.UNKNOWN_MODEL:
        return UnknownModelError(message)
    return ProtocolError(message)


def _read_exact(stream: BinaryIO, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO, max_bytes: int = MAX_FRAME_BYTES) -> Optional[bytes]:
    """Next frame payload, or None when the peer closed cleanly between frames.

    An oversize header raises `OversizeFrameError` before any payload is read,
    so the caller can skip the declared bytes and stay in sync.
    """
    header = _read_exact(stream, FRAME_HEADER.size)
    if not header:
        return None
    if len(header) < FRAME_HEADER.size:
        raise TransportError("connection closed inside a frame header")
    (length,) = FRAME_HEADER.unpack(header)
    if length > max_bytes:
        raise OversizeFrameError(
            f"frame of {length} bytes exceeds the {max_bytes} byte limit", length
        )
    payload = _read_exact(stream, length)
    if len(payload) != length:
        raise TransportError(f"connection closed after {len(payload)} of {length} frame bytes")
    return payload


def skip_bytes(stream: BinaryIO, count: int) -> bool:
    """Discard `count` bytes; False if the stream ended first."""
    remaining = count
    while remaining:
        chunk = stream.read(min(remaining, DRAIN_CHUNK))
        if not chunk:
            return False
        remaining -= len(chunk)
    return True


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(FRAME_HEADER.pack(len(payload)) + payload)
    stream.flush()


@dataclass(frozen=True)
class Response:
    status: Status
    height: int = 0
    width: int = 0
    payload: bytes = b""

    def pack(self) -> bytes:
        return RESPONSE_HEADER.pack(int(self.status), self.height, self.width) + self.payload

    @classmethod
    def unpack(cls, blob: bytes) -> "Response":
        if len(blob) < RESPONSE_HEADER.size:
            raise TransportError(f"response too short ({len(blob)} bytes)")
        status, height, width = RESPONSE_HEADER.unpack_from(blob)
        try:
            code = Status(status)
        except ValueError as e:
            raise ProtocolError(f"unknown response status {status}") from e
        return cls(code, height, width, bytes(blob[RESPONSE_HEADER.size :]))
