"""Deterministic, seedable PRNG: splitmix64 counter stream with uniform,
Box-Muller normal, and Marsaglia-Tsang gamma sampling.

The stream depends only on (seed, call sequence), so equal seeds give
bit-identical samples across runs and platforms.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

# 2^-53, so 53-bit mantissas map to [0, 1)
_INV53 = 1.0 / float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


class Rng:
    """Counter-based splitmix64 generator with a 64-bit state."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = self.seed

    def spawn(self, key: int) -> "Rng":
        """Derive an independent stream; used for per-purpose seed streams."""
        word = np.array([(self.seed ^ ((key + 1) * _GOLDEN)) & _MASK64],
                        dtype=np.uint64)
        return Rng(int(_mix(word)[0]))

    def _raw(self, k: int) -> np.ndarray:
        """Next k raw 64-bit words."""
        idx = np.arange(1, k + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        idx += np.uint64(self._counter)
        self._counter = (self._counter + k * _GOLDEN) & _MASK64
        return _mix(idx)

    def uniform(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """i.i.d. uniforms on [low, high)."""
        u = (self._raw(size) >> _S11).astype(np.float64) * _INV53
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def _uniform_open(self, size: int) -> np.ndarray:
        # (0, 1]: safe as a log argument
        u = ((self._raw(size) >> _S11) + np.uint64(1)).astype(np.float64) * _INV53
        return u

    def normal(self, size: int) -> np.ndarray:
        """Standard normals via Box-Muller (two uniforms per pair)."""
        m = (size + 1) // 2
        u1 = self._uniform_open(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:size]

    def gamma(self, k: float, size: int) -> np.ndarray:
        """Gamma(k, 1) via Marsaglia-Tsang; k < 1 uses the shape boost
        Gamma(k) = Gamma(k+1) * U^(1/k)."""
        if k <= 0:
            raise ValueError(f"gamma shape must be positive, got {k}")
        if k < 1.0:
            g = self._gamma_ge1(k + 1.0, size)
            u = self._uniform_open(size)
            return g * u ** (1.0 / k)
        return self._gamma_ge1(k, size)

    def _gamma_ge1(self, k: float, size: int) -> np.ndarray:
        d = k - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            m = todo.size
            x = self.normal(m)
            u = self._uniform_open(m)
            v = (1.0 + c * x) ** 3
            pos = v > 0.0
            squeeze = pos & (u < 1.0 - 0.0331 * x**4)
            full = pos & ~squeeze
            if np.any(full):
                lv = np.log(v, out=np.zeros_like(v), where=full)
                full &= np.log(u) < 0.5 * x**2 + d * (1.0 - v + lv)
            ok = squeeze | full
            out[todo[ok]] = d * v[ok]
            todo = todo[~ok]
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        u = self.uniform(n)
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derangement(self, n: int) -> np.ndarray:
        """Uniform random cycle (Sattolo); no index maps to itself."""
        if n < 2:
            raise ValueError("derangement needs n >= 2")
        perm = np.arange(n)
        u = self.uniform(n)
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def integers(self, n: int, size: int) -> np.ndarray:
        """i.i.d. integers uniform on {0, ..., n-1}."""
        return np.minimum((self.uniform(size) * n).astype(np.int64), n - 1)
