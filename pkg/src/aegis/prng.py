"""Deterministic 64-bit PRNG primitives shared by the generator and the watermark.

Everything here is defined purely in terms of 64-bit integer arithmetic so the
exact same streams can be reproduced in any language.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def scramble64(z: int) -> int:
    """SplitMix64 output mixing function (finalizer)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold any number of 64-bit values into one well-mixed seed."""
    acc = _GOLDEN
    for p in parts:
        acc = scramble64((acc ^ (p & MASK64)) + _GOLDEN)
    return acc


class SplitMix64:
    """SplitMix64 sequence generator."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return scramble64(self._state)

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        return lo + int(self.next_float() * span)

    def next_sign(self) -> int:
        """Uniform draw from {-1, +1}."""
        return 1 if (self.next_u64() >> 63) else -1


def stream_for(seed: int, tag: str, attempt: int) -> SplitMix64:
    """Attempt-specific stream keyed by (base seed, string tag, attempt)."""
    return SplitMix64(mix64(seed, fnv1a64(tag.encode("utf-8")), attempt))
