"""Deterministic pseudo-random numbers, independent of any library RNG.

A splitmix64 chain derives generator state from a (seed, stream) pair, and
the draws themselves come from xoshiro256** run over a fixed number of
parallel lanes (vectorised in uint64 so bulk generation is cheap).  The
output sequence is a function of (seed, stream) only: lane i at step j
contributes draw j*LANES + i, and a small buffer makes the sequence
independent of how requests are chunked.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM_SALT = 0x5851F42D4C957F2D

# Lane count is part of the sequence definition; changing it changes draws.
_LANES = 4096

_U5 = np.uint64(5)
_U9 = np.uint64(9)
_U17 = np.uint64(17)


def _mix_int(z: int) -> int:
    """One splitmix64 step on a plain python int."""
    z = (z + _GOLDEN) & _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    return z ^ (z >> 31)


def _splitmix_block(root: int, count: int) -> np.ndarray:
    """splitmix64 outputs at indices 1..count from the given root state."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(root & _MASK) + np.uint64(_GOLDEN) * idx
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Rng:
    """Seeded random stream; identical (seed, stream) replays identical draws."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK
        self.stream = int(stream) & _MASK
        root = _mix_int(_mix_int(self.seed) ^ _mix_int(self.stream ^ _STREAM_SALT))
        state = _splitmix_block(root, 4 * _LANES).reshape(4, _LANES).copy()
        dead = ~np.any(state != 0, axis=0)
        if dead.any():  # xoshiro must never sit at the all-zero fixed point
            state[0, dead] = 1
        self._state = state
        self._buf = np.empty(0, dtype=np.uint64)
        self._children = 0

    def split(self) -> "Rng":
        """Derive an independent child stream; deterministic per parent state."""
        self._children += 1
        child = _mix_int((self.stream + _GOLDEN * self._children) ^ _mix_int(self.seed))
        return Rng(self.seed, stream=child)

    def _step(self) -> np.ndarray:
        """Advance every lane one xoshiro256** step, returning LANES outputs."""
        s = self._state
        out = _rotl(s[1] * _U5, 7) * _U9
        t = s[1] << _U17
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return out

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit draws."""
        if n < 0:
            raise ValueError(f"draw count must be nonnegative, got {n}")
        if n <= self._buf.size:
            out, self._buf = self._buf[:n], self._buf[n:]
            return out
        chunks = [self._buf]
        have = self._buf.size
        while have < n:
            chunks.append(self._step())
            have += _LANES
        flat = np.concatenate(chunks)
        out, self._buf = flat[:n], flat[n:]
        return out

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """n standard normal draws via Box-Muller (pairs; odd tail discarded)."""
        pairs = (n + 1) // 2
        u = self.u64(2 * pairs)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1)
        u1 = ((u[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53
        u2 = (u[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def normal_matrix(self, shape: tuple[int, ...]) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        return self.normal(size).reshape(shape)

    def below(self, bound: int) -> int:
        """One integer uniform in [0, bound)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return int(self.u64(1)[0] % np.uint64(bound))

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n > 1:
            draws = self.u64(n - 1)
            for i in range(n - 1, 0, -1):
                j = int(draws[n - 1 - i] % np.uint64(i + 1))
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices sampled from range(n), in draw order."""
        if k > n:
            raise ValueError(f"cannot sample {k} distinct values from {n}")
        return self.permutation(n)[:k]


def derive_stream(base: int, label: str) -> int:
    """Fold a text label into a stream id; stable across runs and platforms."""
    h = base & _MASK
    for byte in label.encode("utf-8"):
        h = _mix_int(h ^ byte)
    return h


def sample_gaussian(rng: Rng, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    """n Gaussian draws; std=0 returns a constant vector without consuming draws."""
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if std == 0.0:
        return np.full(n, float(mean))
    return float(mean) + float(std) * rng.normal(n)
