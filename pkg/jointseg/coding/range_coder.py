"""
Carry-less integer range coder over quantised CDF tables.

32-bit `low`/`range` state with byte-wise renormalisation: a byte is shipped
once the top byte of `low` and `low + range` agree, and `range` is forced down
to the next 2^16 boundary when it underflows. Encoder and decoder perform the
same renormalisation steps, so the decoder reads exactly the bytes the
encoder wrote; reading past the end means the buffer was truncated.

Mismatched table sequences are not detectable by construction: decoding with
different tables silently yields different symbols.
"""

import bisect
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import CodingError, DecodeError, ValidationError

logger = logging.getLogger(__name__)

PRECISION = 16
_MASK = 0xFFFFFFFF
_TOP = 1 << 24
_BOT = 1 << 16
_FLUSH_BYTES = 4


@dataclass(frozen=True)
class CdfTable:
    """Quantised cumulative counts; symbol index 0 codes the value `offset`."""

    cdf: Tuple[int, ...]
    offset: int = 0
    precision: int = PRECISION

    def __post_init__(self) -> None:
        if len(self.cdf) < 2 or self.cdf[0] != 0:
            raise ValidationError("CDF table must start at 0 and hold at least one symbol")
        if self.cdf[-1] != 1 << self.precision:
            raise ValidationError(
                f"CDF table must end at 2^{self.precision}, got {self.cdf[-1]}"
            )
        if any(b <= a for a, b in zip(self.cdf, self.cdf[1:])):
            raise ValidationError("CDF table must be strictly increasing")

    @property
    def num_symbols(self) -> int:
        return len(self.cdf) - 1

    @property
    def min_value(self) -> int:
        return self.offset

    @property
    def max_value(self) -> int:
        return self.offset + self.num_symbols - 1

    def probability(self, value: int) -> float:
        index = value - self.offset
        return (self.cdf[index + 1] - self.cdf[index]) / (1 << self.precision)


@dataclass(frozen=True)
class CodedBuffer:
    payload: bytes
    symbol_count: int


def pmf_to_cdf(pmf: np.ndarray, precision: int = PRECISION) -> Tuple[int, ...]:
    """Quantise a probability vector to integer counts summing to 2^precision.

    Every symbol keeps at least one count; the remainder is handed out by
    largest fractional part, ties to the lower index.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    n = pmf.size
    total = 1 << precision
    if n == 0 or n > total:
        raise ValidationError(f"cannot build a {precision}-bit table for {n} symbols")
    pmf = np.clip(pmf, 0.0, None)
    mass = pmf.sum()
    if not np.isfinite(mass) or mass <= 0:
        raise ValidationError("pmf has no positive mass")
    scaled = pmf / mass * (total - n)
    counts = np.floor(scaled).astype(np.int64) + 1
    remainder = total - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-(scaled - np.floor(scaled)), kind="stable")
        counts[order[:remainder]] += 1
    cdf = np.concatenate([[0], np.cumsum(counts)])
    return tuple(int(v) for v in cdf)


class RangeEncoder:
    """Single-use encoder; call `encode` per symbol, then `finish`."""

    def __init__(self) -> None:
        self._low = 0
        self._range = _MASK
        self._out = bytearray()
        self._count = 0
        self._finished = False

    def encode(self, value: int, table: CdfTable) -> None:
        index = value - table.offset
        if index < 0 or index >= table.num_symbols:
            raise CodingError(
                f"value {value} outside table support [{table.min_value}, {table.max_value}]"
            )
        start = table.cdf[index]
        freq = table.cdf[index + 1] - start
        step = self._range >> table.precision
        self._low = (self._low + start * step) & _MASK
        self._range = step * freq
        while True:
            if (self._low ^ (self._low + self._range)) >= _TOP:
                if self._range >= _BOT:
                    break
                self._range = -self._low & (_BOT - 1)
            self._out.append(self._low >> 24)
            self._low = (self._low << 8) & _MASK
            self._range <<= 8
        self._count += 1

    def finish(self) -> CodedBuffer:
        if not self._finished:
            for _ in range(_FLUSH_BYTES):
                self._out.append(self._low >> 24)
                self._low = (self._low << 8) & _MASK
            self._finished = True
        return CodedBuffer(payload=bytes(self._out), symbol_count=self._count)


class RangeDecoder:
    """Single-use decoder mirroring `RangeEncoder`."""

    def __init__(self, payload: bytes) -> None:
        self._data = payload
        self._pos = 0
        self._low = 0
        self._range = _MASK
        self._code = 0
        for _ in range(_FLUSH_BYTES):
            self._code = (self._code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise DecodeError(
                f"range-coded payload truncated after {len(self._data)} bytes"
            )
        byte = self._data[self._pos]
        self._pos += 1
        return byte

    def decode(self, table: CdfTable) -> int:
        step = self._range >> table.precision
        target = ((self._code - self._low) & _MASK) // step
        if target >= table.cdf[-1]:
            raise DecodeError("corrupt payload: code outside the table range")
        index = bisect.bisect_right(table.cdf, target) - 1
        start = table.cdf[index]
        freq = table.cdf[index + 1] - start
        self._low = (self._low + start * step) & _MASK
        self._range = step * freq
        while True:
            if (self._low ^ (self._low + self._range)) >= _TOP:
                if self._range >= _BOT:
                    break
                self._range = -self._low & (_BOT - 1)
            self._code = ((self._code << 8) | self._next_byte()) & _MASK
            self._low = (self._low << 8) & _MASK
            self._range <<= 8
        return index + table.offset

    @property
    def bytes_consumed(self) -> int:
        return self._pos


def encode(symbols: Sequence[int], tables: Sequence[CdfTable]) -> CodedBuffer:
    """Entropy-code `symbols[i]` with `tables[i]`."""
    if len(symbols) != len(tables):
        raise CodingError(f"{len(symbols)} symbols but {len(tables)} tables")
    encoder = RangeEncoder()
    for value, table in zip(symbols, tables, strict=True):
        encoder.encode(int(value), table)
    buffer = encoder.finish()
    logger.debug(f"RANGE_ENCODE: {buffer.symbol_count} symbols -> {len(buffer.payload)} bytes")
    return buffer


def decode(buffer: CodedBuffer, tables: Sequence[CdfTable], count: int) -> List[int]:
    """Inverse of `encode` given the identical table sequence."""
    if len(tables) < count:
        raise DecodeError(f"{count} symbols requested but only {len(tables)} tables")
    decoder = RangeDecoder(buffer.payload)
    return [decoder.decode(tables[i]) for i in range(count)]


def ideal_codelength(symbols: Sequence[int], tables: Sequence[CdfTable]) -> float:
    """Σ −log2 p_i in bits under the quantised tables."""
    probs = np.array(
        [table.probability(int(v)) for v, table in zip(symbols, tables, strict=True)],
        dtype=np.float64,
    )
    return float(-np.log2(probs).sum()) if probs.size else 0.0
