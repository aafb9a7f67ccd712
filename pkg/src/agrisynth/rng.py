"""Deterministic random primitives for splits and retry jitter.

Splits must reproduce bit-for-bit across machines and languages, so the
generator is pinned to xorshift64* with a splitmix64-scrambled seed
instead of whatever the host runtime ships. The exact sequence is frozen
by test vectors in tests/test_rng.py; changing this module invalidates
every recorded split.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Fold a string label into a base seed (FNV-1a over UTF-8 bytes)."""
    h = _FNV_OFFSET
    for b in label.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h ^ (seed & _MASK64)


class Xorshift64Star:
    """xorshift64* generator (Vigna 2016 parameterization 12/25/27)."""

    def __init__(self, seed: int):
        # splitmix64 both decorrelates small seeds and avoids the
        # forbidden all-zero state
        state = _splitmix64(seed & _MASK64)
        self._state = state if state else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def below(self, n: int) -> int:
        """Unbiased draw from [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"below() requires n >= 1, got {n}")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < threshold:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, high index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniform(self, low: float, high: float) -> float:
        # 53-bit mantissa draw, same construction as most runtimes
        u = self.next_u64() >> 11
        return low + (high - low) * (u / float(1 << 53))
