"""Reproducible pseudo-random streams.

Every random draw in the package (weight init, splits, batch shuffles,
spectral test vectors, synthetic corpora) goes through xoshiro256**
seeded by expanding a 64-bit seed with splitmix64. The generator
definition is part of the external contract: any implementation using the
same algorithm and the derivations below reproduces our results exactly.

Derived quantities:

* ``random()`` : ``(next_u64() >> 11) * 2**-53``, uniform on [0, 1).
* ``below(n)`` : unbiased integer in [0, n) by rejection of the top
  ``2**64 mod n`` values, then ``x % n``.
* ``normal``  : Box-Muller pairs, ``u1 = 1 - random()``, ``u2 = random()``,
  giving ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)`` with
  ``r = sqrt(-2 ln u1)``.
* Fisher-Yates : for ``i = N-1 .. 1`` swap ``i`` with ``below(i + 1)``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 2.0 ** -53

# Sub-stream offsets added to a user seed.
INIT_STREAM = 0
BATCH_STREAM = 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with splitmix64 seed expansion."""

    def __init__(self, seed: int):
        sm = int(seed) & MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * _TWO_M53

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"below() needs a positive bound, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform_array(self, size: int, low: float, high: float) -> np.ndarray:
        """``size`` draws from [low, high), in stream order."""
        span = high - low
        nxt = self.next_u64
        return np.array(
            [low + span * ((nxt() >> 11) * _TWO_M53) for _ in range(size)],
            dtype=np.float64,
        )

    def normal_array(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        i = 0
        while i < size:
            u1 = 1.0 - self.random()
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(u1))
            out[i] = r * math.cos(2.0 * math.pi * u2)
            if i + 1 < size:
                out[i + 1] = r * math.sin(2.0 * math.pi * u2)
            i += 2
        return out

    def permutation(self, n: int) -> np.ndarray:
        perm = list(range(n))
        below = self.below
        for i in range(n - 1, 0, -1):
            j = below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)


class LaneGenerator:
    """Many independent xoshiro256** streams advanced in lock-step.

    Lane ``i`` is bit-for-bit the stream ``Xoshiro256(seeds[i])``; numpy
    vectorizes across lanes so per-trial or per-row streams stay cheap.
    """

    def __init__(self, seeds):
        seeds = np.asarray(seeds, dtype=np.uint64).ravel()
        sm = seeds.copy()
        state = np.empty((4, seeds.size), dtype=np.uint64)
        for k in range(4):
            sm, state[k] = _splitmix64_vec(sm)
        self._s = state

    @property
    def lanes(self) -> int:
        return self._s.shape[1]

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl_vec(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = _rotl_vec(s3, 45)
        return result

    def random(self) -> np.ndarray:
        return (self.next_u64() >> np.uint64(11)).astype(np.float64) * _TWO_M53

    def normal(self, d: int) -> np.ndarray:
        """``(lanes, d)`` standard normals; each lane follows ``normal_array``."""
        out = np.empty((self.lanes, d), dtype=np.float64)
        for i in range(0, d, 2):
            u1 = 1.0 - self.random()
            u2 = self.random()
            r = np.sqrt(-2.0 * np.log(u1))
            out[:, i] = r * np.cos(2.0 * np.pi * u2)
            if i + 1 < d:
                out[:, i + 1] = r * np.sin(2.0 * np.pi * u2)
        return out


def _splitmix64_vec(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    state = state + np.uint64(_GOLDEN)
    z = state.copy()
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


def _rotl_vec(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


def lane_seeds(seed: int, count: int) -> np.ndarray:
    """Seeds ``seed, seed+1, ..., seed+count-1`` modulo 2**64."""
    base = np.uint64(int(seed) & MASK64)
    with np.errstate(over="ignore"):
        return base + np.arange(count, dtype=np.uint64)
