"""
Bitstream container (all integers big-endian):

    magic      4s   b"JSDC"
    version    u8
    flags      u8   bit 0: produced by a fused model
    model_id   u16
    H, W       u32 × 2  original image size (before padding to the model stride)
    h dims     u16 × 2  spatial size of ĥ
    channels   u16
    len_b_h    u32
    len_b_r    u32
    b_ĥ, b_r̂   payloads
    crc32      u32  over every preceding byte
"""

import struct
import zlib
from dataclasses import dataclass

from ..config import MODEL_STRIDE
from ..errors import TransportError

CONTAINER_MAGIC = b"JSDC"
CONTAINER_VERSION = 1
FLAG_FUSED = 0x01
_HEADER = struct.Struct(">4sBBHIIHHHII")
HEADER_SIZE = _HEADER.size
CRC_SIZE = 4


def payload_bpp(len_b_h: int, len_b_r: int, height: int, width: int) -> float:
    """Bits per input pixel of the two coded payloads."""
    return 8.0 * (len_b_h + len_b_r) / (height * width)


def latent_grid(height: int, width: int) -> tuple:
    """Spatial size of ĥ for an image of the given size."""
    return -(-height // MODEL_STRIDE), -(-width // MODEL_STRIDE)


@dataclass(frozen=True)
class BitstreamContainer:
    model_id: int
    height: int
    width: int
    hyper_height: int
    hyper_width: int
    channels: int
    b_h: bytes
    b_r: bytes
    fused: bool = False
    version: int = CONTAINER_VERSION

    @property
    def bpp(self) -> float:
        return payload_bpp(len(self.b_h), len(self.b_r), self.height, self.width)

    @property
    def padded_size(self) -> tuple:
        return self.hyper_height * MODEL_STRIDE, self.hyper_width * MODEL_STRIDE

    def pack(self) -> bytes:
        header = _HEADER.pack(
            CONTAINER_MAGIC,
            self.version,
            FLAG_FUSED if self.fused else 0,
            self.model_id,
            self.height,
            self.width,
            self.hyper_height,
            self.hyper_width,
            self.channels,
            len(self.b_h),
            len(self.b_r),
        )
        body = header + self.b_h + self.b_r
        return body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    @classmethod
    def unpack(cls, blob: bytes) -> "BitstreamContainer":
        """Parse and verify; any framing or CRC problem is a TransportError."""
        if len(blob) < HEADER_SIZE + CRC_SIZE:
            raise TransportError(f"container too short ({len(blob)} bytes)")
        body, (crc,) = blob[:-CRC_SIZE], struct.unpack(">I", blob[-CRC_SIZE:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise TransportError("container CRC mismatch")
        magic, version, flags, model_id, height, width, hh, hw, channels, len_h, len_r = (
            _HEADER.unpack_from(body)
        )
        if magic != CONTAINER_MAGIC:
            raise TransportError(f"bad container magic {magic!r}")
        if version != CONTAINER_VERSION:
            raise TransportError(f"unsupported container version {version}")
        if HEADER_SIZE + len_h + len_r != len(body):
            raise TransportError("container payload lengths do not match its size")
        if height == 0 or width == 0 or (hh, hw) != latent_grid(height, width):
            raise TransportError(f"inconsistent geometry {height}x{width} with ĥ {hh}x{hw}")
        b_h = body[HEADER_SIZE : HEADER_SIZE + len_h]
        b_r = body[HEADER_SIZE + len_h :]
        return cls(
            model_id=model_id,
            height=height,
            width=width,
            hyper_height=hh,
            hyper_width=hw,
            channels=channels,
            b_h=bytes(b_h),
            b_r=bytes(b_r),
            fused=bool(flags & FLAG_FUSED),
            version=version,
        )
