"""
Checkpoint file format (little-endian):

    magic     4s   b"JSDW"
    version   u8
    flags     u8   bit 0: fused model
    cfg_len   u32  followed by cfg_len bytes of UTF-8 config dump
    count     u32
    count × { name_len u16, name (UTF-8), rank u8, extents u32 × rank, float32 data }
    crc32     u32  over every preceding byte
"""

import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..errors import DataError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"JSDW"
CHECKPOINT_VERSION = 1
FLAG_FUSED = 0x01


@dataclass
class Checkpoint:
    """Named float32 arrays plus the config they were produced with."""

    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    config_text: str = ""
    fused: bool = False


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    config_bytes = checkpoint.config_text.encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack(
            "<BBI",
            CHECKPOINT_VERSION,
            FLAG_FUSED if checkpoint.fused else 0,
            len(config_bytes),
        ),
        config_bytes,
        struct.pack("<I", len(checkpoint.arrays)),
    ]
    for name, array in checkpoint.arrays.items():
        encoded_name = name.encode("utf-8")
        data = np.ascontiguousarray(array, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack(f"<B{data.ndim}I", data.ndim, *data.shape))
        parts.append(data.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < 18 or blob[:4] != CHECKPOINT_MAGIC:
        raise DataError("not a jointseg checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise DataError("checkpoint CRC mismatch")
    version, flags, config_len = struct.unpack_from("<BBI", body, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    offset = 10
    config_text = body[offset : offset + config_len].decode("utf-8")
    offset += config_len
    (count,) = struct.unpack_from("<I", body, offset)
    offset += 4

    arrays: Dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", body, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", body, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(body, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            arrays[name] = data.reshape(shape).astype(np.float32)
    except (struct.error, ValueError) as e:
        raise DataError(f"truncated checkpoint: {e}") from e
    if offset != len(body):
        raise DataError("trailing bytes in checkpoint")
    return Checkpoint(arrays=arrays, config_text=config_text, fused=bool(flags & FLAG_FUSED))


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(checkpoint)
    target.write_bytes(blob)
    logger.info(f"CHECKPOINT_SAVED: {target} - {len(checkpoint.arrays)} arrays, {len(blob)} bytes")
    return target


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    source = Path(path)
    if not source.exists():
        raise DataError(f"checkpoint not found: {source}")
    checkpoint = decode_checkpoint(source.read_bytes())
    logger.info(f"CHECKPOINT_LOADED: {source} - fused={checkpoint.fused}")
    return checkpoint

