"""Seedable, cross-platform random streams.

Every random draw in this package flows through ``Xoshiro256pp``, a pure
Python xoshiro256++ generator seeded through splitmix64.  The point is not
speed but a *documented* stream: given the same 64-bit seed, any
implementation of these conventions produces bit-identical noise, batches,
and initializations.

Stream conventions (all fixed, do not change without bumping formats):

* ``uniform``: take the top 53 bits of a 64-bit output, scale by 2**-53,
  giving doubles in [0, 1).
* ``normals(n)``: Box-Muller on consecutive uniform pairs, ``(u1, u2)`` in
  draw order with ``u1`` shifted into (0, 1]; outputs interleaved
  ``[z_cos, z_sin, ...]`` and truncated to ``n``.  Exactly
  ``2 * ceil(n / 2)`` uniforms are consumed; no spare is cached.
* ``randbelow(n)``: ``floor(uniform * n)`` (bias < 2**-39 for any n used
  here, determinism is what matters).
* ``permutation(n)``: Fisher-Yates, swapping index i (from n-1 down to 1)
  with ``randbelow(i + 1)``.
* ``index_sample(n, k)``: rejection sampling of distinct indices, kept in
  first-draw order.

Child streams are derived from (seed, label) so that consuming more numbers
in one stream never perturbs another.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_U53 = 2.0 ** -53


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _fnv1a64(label: str) -> int:
    h = 0xCBF29CE484222325
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(seed: int, label: str) -> int:
    """Deterministically derive a child seed from (seed, label).

    Labels may carry indices, e.g. ``physics:173`` for the per-iteration
    physics sampling stream.
    """
    _, out = splitmix64((seed ^ _fnv1a64(label)) & _MASK)
    return out


class Xoshiro256pp:
    """xoshiro256++ with splitmix64 state expansion from a 64-bit seed."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        state = seed & _MASK
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self.s0, self.s1, self.s2, self.s3 = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        x = (s0 + s3) & _MASK
        result = (((x << 23) & _MASK | (x >> 41)) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self.s0, self.s1, self.s2 = s0, s1, s2
        self.s3 = ((s3 << 45) & _MASK) | (s3 >> 19)
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _U53

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), as a float64 array."""
        out = np.empty(n, dtype=np.float64)
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        for i in range(n):
            x = (s0 + s3) & _MASK
            r = (((x << 23) & _MASK | (x >> 41)) + s0) & _MASK
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) & _MASK) | (s3 >> 19)
            out[i] = (r >> 11) * _U53
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return out

    def normals(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on consecutive uniform pairs."""
        if n == 0:
            return np.empty(0, dtype=np.float64)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = u[0::2] + _U53  # shift into (0, 1] so log never sees 0
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def randbelow(self, n: int) -> int:
        return int(self.uniform() * n)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of 0..n-1."""
        a = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            a[i], a[j] = a[j], a[i]
        return np.asarray(a, dtype=np.intp)

    def index_sample(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from 0..n-1, uniform without replacement."""
        if k > n:
            raise ValueError(f"cannot sample {k} distinct indices from {n}")
        seen = set()
        out = np.empty(k, dtype=np.intp)
        count = 0
        while count < k:
            j = self.randbelow(n)
            if j not in seen:
                seen.add(j)
                out[count] = j
                count += 1
        return out


def stream(seed: int, label: str) -> Xoshiro256pp:
    """Convenience: a fresh generator on the (seed, label) child stream."""
    return Xoshiro256pp(derive_seed(seed, label))
