"""Counter-based pseudo-random number generation (SplitMix64).

Every random decision in this package flows through `Rng` so that runs are
reproducible bit-for-bit from a single integer seed, on any platform and
with either kernel backend.

The generator is SplitMix64 used in counter mode: draw number ``i`` of the
stream keyed by ``key`` is

    out_i = mix64(key + (i + 1) * GOLDEN)   (mod 2**64)

where ``mix64`` is the SplitMix64 finalizer (xor-shift / multiply avalanche)
and GOLDEN is the 64-bit golden-ratio constant. Because each output depends
only on (key, i), streams can be generated out of order and vectorized, and
a compiled kernel can reproduce exactly the same values as the NumPy path.

Integer draws below a bound use floor(uniform * bound), which carries a
modulo-style bias of at most bound / 2**53 -- negligible for the item
universes this package handles (bound < 2**32).
"""

from __future__ import annotations

import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

_U_GOLDEN = np.uint64(GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)
_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a python integer (mod 2**64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _SHIFT30)) * _MIX1
    z = (z ^ (z >> _SHIFT27)) * _MIX2
    return z ^ (z >> _SHIFT31)


def derive_seed(seed: int, tag: int) -> int:
    """A new 64-bit seed for an independent sub-stream of `seed`."""
    return mix64((seed & _MASK) ^ mix64((tag + 1) * GOLDEN))


class Rng:
    """Deterministic random stream. Same (seed, call sequence) => same values."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, _counter: int = 0):
        self.key = mix64(seed)
        self.counter = _counter

    def derive(self, tag: int) -> "Rng":
        """Independent child stream; deterministic in (self.key, tag)."""
        child = Rng.__new__(Rng)
        child.key = mix64(self.key ^ mix64((tag + 1) * GOLDEN))
        child.counter = 0
        return child

    def reserve(self, count: int) -> tuple[int, int]:
        """Hand out a (key, start_counter) block of `count` draws.

        Used by kernels that generate values themselves; the caller's
        stream skips past the block either way.
        """
        start = self.counter
        self.counter += count
        return self.key, start

    def next_u64(self, count: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        return _mix64_array(np.uint64(self.key) + idx * _U_GOLDEN)

    def uniform(self, count: int) -> np.ndarray:
        """float64 in [0, 1), 53 random bits each."""
        return (self.next_u64(count) >> _SHIFT11).astype(np.float64) * _INV_2_53

    def below(self, bound: int, count: int) -> np.ndarray:
        """int64 in [0, bound)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        j = (self.uniform(count) * bound).astype(np.int64)
        return np.minimum(j, bound - 1)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Gaussian samples via Box-Muller on the uniform stream."""
        n = int(np.prod(shape)) if not isinstance(shape, int) else shape
        pairs = (n + 1) // 2
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        # 1 - u1 lies in (0, 1], so the log is finite.
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = mean + std * z
        return out if isinstance(shape, int) else out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of random keys)."""
        return np.argsort(self.uniform(n), kind="stable")

    def shuffle(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.permutation(len(arr))]
