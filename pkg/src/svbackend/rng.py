"""Deterministic random number generation.

Every random choice in this package flows through :class:`SplitMix64` so that
results are reproducible bit for bit from a single integer seed, independent of
platform, process, and host language. The generator is the splitmix64 mixer:
a 64-bit counter advanced by the odd constant 0x9E3779B97F4A7C15 (2^64 divided
by the golden ratio) whose output is the counter passed through two
xor-shift-multiply rounds and a final xor-shift. It is equidistributed over
64-bit outputs, passes BigCrush, and is trivial to port.

Independent substreams are derived by :func:`derive_seed`, which hashes a text
label with FNV-1a (64-bit) into the seed and remixes. Substreams therefore do
not depend on the order in which a caller visits labeled items, only on the
base seed and the label.

Floating-point helpers are defined exactly:

* ``uniform`` takes the top 53 bits of one output, scaled by 2^-53, yielding
  a double in [0, 1).
* ``gauss`` is the Box-Muller transform of two uniforms, with the second value
  of each pair cached, so draws come in deterministic pairs.
* ``below(n)`` rejection-samples unbiased integers in [0, n).
* ``shuffle``/``take`` are Fisher-Yates (``take`` stops after the first k
  positions, which is enough for a uniform k-subset in selection order).
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """One splitmix64 finalizer round on a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of the UTF-8 bytes of ``text``, 64-bit."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Seed for the substream identified by ``label`` under the base ``seed``."""
    return mix64((seed & _MASK64) ^ fnv1a64(label))


class SplitMix64:
    """splitmix64 stream started at ``seed``. See the module docstring."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._gauss_cache: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        # largest multiple of n that fits in 64 bits; values past it would bias
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def gauss(self) -> float:
        """Standard normal draw via Box-Muller on two uniforms."""
        if self._gauss_cache is not None:
            value = self._gauss_cache
            self._gauss_cache = None
            return value
        # u1 shifted into (0, 1] so the log is finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_cache = radius * math.sin(theta)
        return radius * math.cos(theta)

    def gauss_vector(self, n: int) -> list[float]:
        return [self.gauss() for _ in range(n)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def take(self, items: list, k: int) -> list:
        """Uniform k-subset of ``items`` in selection order. Copies the input."""
        if k < 0:
            raise ValueError("take() requires k >= 0")
        if k > len(items):
            raise ValueError(f"take() requires k <= len(items), got {k} > {len(items)}")
        pool = list(items)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
