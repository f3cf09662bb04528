"""Counter-based random streams.

Every stream is keyed by ``(seed, index)``; the ``p``-th draw of a stream is a
pure function of the key and ``p`` (SplitMix64 output function applied to a
Weyl sequence started at the key).  Replicate ``r`` of an experiment uses
``RngStream(seed, r)``, so results do not depend on how replicates are
scheduled across threads.

The jitted helpers take and return the position explicitly so that kernels
can thread the stream state through loops without objects.
"""
from __future__ import annotations

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit
def stream_key(seed, index):
    k = mix64(np.uint64(seed) + _GOLDEN)
    return mix64(k ^ (np.uint64(index) * _STREAM + _GOLDEN))


@nb.njit(inline="always")
def next_u64(key, pos):
    return mix64(key + np.uint64(pos + 1) * _GOLDEN)


@nb.njit(inline="always")
def next_uniform(key, pos):
    """Uniform double in [0, 1) from 53 random bits."""
    return np.float64(next_u64(key, pos) >> _S11) * _INV53


@nb.njit(inline="always")
def next_below(key, pos, n):
    """Integer uniform on {0, ..., n-1}; bias is below 2**-53 * n."""
    j = np.int64(next_uniform(key, pos) * n)
    return j if j < n else n - 1


@nb.njit
def _uniform_block(key, pos, out):
    for i in range(out.shape[0]):
        out[i] = next_uniform(key, pos + i)
    return pos + out.shape[0]


class RngStream:
    """A reproducible random stream identified by ``(seed, index)``.

    ``position`` counts the draws consumed so far; two streams with equal
    seed, index and position produce identical output.
    """

    __slots__ = ("seed", "index", "position", "key")

    def __init__(self, seed: int, index: int = 0, position: int = 0):
        if not (0 <= seed < 2**64) or not (0 <= index < 2**64):
            raise ValueError("seed and index must fit in 64 unsigned bits")
        self.seed = int(seed)
        self.index = int(index)
        self.position = int(position)
        self.key = np.uint64(stream_key(np.uint64(self.seed), np.uint64(self.index)))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, index={self.index}, position={self.position})"

    def random(self, size: int | None = None):
        if size is None:
            u = next_uniform(self.key, self.position)
            self.position += 1
            return float(u)
        out = np.empty(size)
        self.position = int(_uniform_block(self.key, self.position, out))
        return out

    def randbelow(self, n: int) -> int:
        j = int(next_below(self.key, self.position, n))
        self.position += 1
        return j

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of ``1..n`` (Fisher-Yates)."""
        perm = np.arange(1, n + 1, dtype=np.int64)
        self.position = int(_shuffle(perm, self.key, self.position))
        return perm


@nb.njit
def _shuffle(a, key, pos):
    for i in range(a.shape[0] - 1, 0, -1):
        j = next_below(key, pos, i + 1)
        pos += 1
        a[i], a[j] = a[j], a[i]
    return pos
