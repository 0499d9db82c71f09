"""SplitMix64 and the pinned word-fold used for every derived identifier.

All values are unsigned 64-bit; arithmetic wraps modulo 2**64.
"""

from __future__ import annotations

import struct
from typing import Iterable

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def finalize(z: int) -> int:
    """SplitMix64 output function (two xor-shift-multiply rounds and a final xor-shift)."""
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def fold_words(words: Iterable[int]) -> int:
    """Fold 64-bit words into one mixed value.

    state starts at 0; each word w does ``state = (state ^ w) * GOLDEN``;
    the result is passed through :func:`finalize`.
    """
    state = 0
    for w in words:
        state = ((state ^ (w & MASK64)) * GOLDEN) & MASK64
    return finalize(state)


def coord_word(token: int, generation: int, proto_code: int, family_code: int, tag: int) -> int:
    """Pack slot coordinates into the second message word (little-endian u16,u32,u8,u8)."""
    raw = struct.pack(
        "<HIBB",
        token & 0xFFFF,
        generation & 0xFFFFFFFF,
        ((proto_code & 0xF) << 4) | (family_code & 0xF),
        tag & 0xFF,
    )
    return int.from_bytes(raw, "little")


class SplitMix64:
    """Sequential SplitMix64 generator."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return finalize(self.state)

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is irrelevant at the sizes used here."""
        return self.next() % n

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))


def keystream(seed: int, length: int) -> bytes:
    """``length`` bytes of successive SplitMix64 outputs from ``seed``, little-endian words."""
    if length <= 0:
        return b""
    n = (length + 7) // 8
    with np.errstate(over="ignore"):
        z = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN) + np.uint64(seed & MASK64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z.astype("<u8").tobytes()[:length]
