"""Deterministic random source for mutation, selection, and clustering.

All randomness in the toolkit flows through SplitMix64 streams instead of
``random`` or NumPy generators, so recorded golden outputs and cluster
seeds stay stable across interpreter and library versions.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

T = TypeVar("T")

_MASK = (1 << 64) - 1


class SplitMix64:
    """Seedable 64-bit SplitMix generator; one instance per stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is irrelevant at fuzzing scale."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return self.u64() % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.below(hi - lo + 1)

    def random(self) -> float:
        """Float in [0, 1) with 53 bits of entropy."""
        return (self.u64() >> 11) * (2.0 ** -53)

    def chance(self, p: float) -> bool:
        return self.random() < p

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise ValueError("choice() on empty sequence")
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def rand_bytes(self, n: int) -> bytes:
        return bytes(self.below(256) for _ in range(n))

    def weighted_index(self, weights: Sequence[float]) -> int:
        """Index drawn with probability proportional to its weight."""
        total = 0.0
        for w in weights:
            if w < 0:
                raise ValueError("negative weight")
            total += w
        if total <= 0:
            raise ValueError("weights sum to zero")
        r = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if r < acc:
                return i
        return len(weights) - 1

    def spawn(self) -> "SplitMix64":
        """Fork an independent child stream."""
        return SplitMix64(self.u64())
