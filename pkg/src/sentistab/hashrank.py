"""Language-agnostic seeded selection built on SHA-256.

``rank(key)`` is the first 8 bytes of SHA-256 over the ASCII key, read as a
big-endian unsigned integer. Selecting the k smallest ranks is prefix-stable:
the set chosen for k is always contained in the set chosen for k + 1.
"""

from __future__ import annotations

import hashlib
import math
from typing import Callable, List


def rank(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode("ascii")).digest()[:8], "big")


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def order(n: int, key: Callable[[int], str]) -> List[int]:
    """Indices 0..n-1 sorted by ascending rank (index breaks ties)."""
    return sorted(range(n), key=lambda i: (rank(key(i)), i))


def smallest(n: int, k: int, key: Callable[[int], str]) -> List[int]:
    """The k indices with the smallest rank, returned in ascending index order."""
    return sorted(order(n, key)[:k])


class HashStream:
    """Deterministic integer stream: rank("{seed}:{tag}:{counter}")."""

    def __init__(self, seed: int, tag: str):
        self.seed = seed
        self.tag = tag
        self.counter = 0

    def next(self) -> int:
        v = rank(f"{self.seed}:{self.tag}:{self.counter}")
        self.counter += 1
        return v

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is below 2**-40 for the small n used here."""
        return self.next() % n

    def choice(self, seq):
        return seq[self.below(len(seq))]
