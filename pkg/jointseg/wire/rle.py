"""Run-length coding of label masks: (label u8, run length as LEB128) pairs in row-major order."""

import numpy as np

from ..errors import DecodeError, ValidationError

_CONTINUE = 0x80
_SEVEN_BITS = 0x7F


def _leb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & _SEVEN_BITS
        value >>= 7
        if value:
            out.append(byte | _CONTINUE)
        else:
            out.append(byte)
            return bytes(out)


def rle_mask(mask: np.ndarray) -> bytes:
    flat = np.asarray(mask).reshape(-1)
    if flat.size == 0:
        return b""
    if flat.min() < 0 or flat.max() > 0xFF:
        raise ValidationError("mask labels must fit in a byte")
    starts = np.concatenate([[0], np.flatnonzero(np.diff(flat)) + 1])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    out = bytearray()
    for start, length in zip(starts.tolist(), lengths.tolist(), strict=True):
        out.append(int(flat[start]))
        out += _leb128(length)
    return bytes(out)


def unrle_mask(payload: bytes, height: int, width: int) -> np.ndarray:
    total = height * width
    labels = []
    runs = []
    pos = 0
    covered = 0
    while pos < len(payload):
        label = payload[pos]
        pos += 1
        run = shift = 0
        while True:
            if pos >= len(payload):
                raise DecodeError("mask payload truncated inside a run length")
            byte = payload[pos]
            pos += 1
            run |= (byte & _SEVEN_BITS) << shift
            shift += 7
            if not byte & _CONTINUE:
                break
        if run == 0:
            raise DecodeError("zero-length run in mask payload")
        covered += run
        if covered > total:
            raise DecodeError(f"mask payload covers more than {height}x{width} pixels")
        labels.append(label)
        runs.append(run)
    if covered != total:
        raise DecodeError(f"mask payload truncated: {covered} of {total} pixels")
    return np.repeat(np.array(labels, dtype=np.uint8), runs).reshape(height, width)
