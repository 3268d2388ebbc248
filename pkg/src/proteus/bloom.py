"""Standard Bloom filter over fixed-length key prefixes.

Probe positions use double hashing, ``g_i = (h1 + i*h2) mod m``, from two
seeded 64-bit hashes of the prefix.  Prefixes wider than 64 bits are split into
64-bit limbs: the high limbs are folded into a per-prefix hash state and the
low limb is mixed last, which lets batch code hash many prefixes that share
their high limbs with one numpy pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidPrefixError

M64 = (1 << 64) - 1
MAX_HASHES = 32
_C1 = 0xFF51AFD7ED558CCD
_C2 = 0xC4CEB9FE1A85EC53
_GOLDEN = 0x9E3779B97F4A7C15


def fmix64_int(x: int) -> int:
    """MurmurHash3 64-bit finaliser on a Python int."""
    x ^= x >> 33
    x = (x * _C1) & M64
    x ^= x >> 33
    x = (x * _C2) & M64
    x ^= x >> 33
    return x


def fmix64(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`fmix64_int` over a ``uint64`` array."""
    x = np.asarray(x, dtype=np.uint64)
    x = x ^ (x >> np.uint64(33))
    x = x * np.uint64(_C1)
    x = x ^ (x >> np.uint64(33))
    x = x * np.uint64(_C2)
    return x ^ (x >> np.uint64(33))


def hash_state(seed: int, length: int, stream: int, hi: int = 0) -> int:
    """Hash state for ``length``-bit prefixes whose bits above the low limb equal ``hi``."""
    s = fmix64_int((seed ^ fmix64_int(((length << 8) | stream) + _GOLDEN)) & M64)
    n_hi = (length - 1) // 64 if length > 0 else 0
    for i in range(n_hi - 1, -1, -1):
        s = fmix64_int(s ^ ((hi >> (64 * i)) & M64))
    return s


@dataclass(frozen=True)
class BloomPlan:
    hashes: int
    fpr: float


def plan(m: int, n: int) -> BloomPlan:
    """Hash count and expected false-positive probability for ``m`` bits, ``n`` elements.

    ``h = min(32, ceil(m/n * ln 2))`` and ``p = (1 - exp(-h*n/m))**h``.
    """
    if n < 1:
        raise ValueError("a Bloom filter needs at least one element; represent an empty one as absent")
    if m < 0:
        raise ValueError("negative memory budget")
    if m == 0:
        return BloomPlan(0, 1.0)
    h = max(1, min(MAX_HASHES, math.ceil(m / n * math.log(2))))
    return BloomPlan(h, float(plan_fpr(m, n)))


def plan_fpr(m: np.ndarray | float, n: np.ndarray | float) -> np.ndarray:
    """Vectorised ``plan(m, n).fpr`` for arrays of budgets and element counts."""
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = m / n
        h = np.clip(np.ceil(ratio * math.log(2)), 1, MAX_HASHES)
        p = (1.0 - np.exp(-h / ratio)) ** h
    return np.where(m <= 0, 1.0, p)


class BloomFilter:
    """Bloom filter over ``prefix_len``-bit prefixes with an exact ``m``-bit array."""

    def __init__(self, m: int, n: int, prefix_len: int, seed: int = 0):
        self.m = int(m)
        self.prefix_len = prefix_len
        self.seed = seed & M64
        self.plan = plan(self.m, max(n, 1))
        self.num_hashes = self.plan.hashes
        self._states = {}
        self._bits = np.zeros(self.m, dtype=bool)
        self._packed: np.ndarray | None = None

    # -- hashing -------------------------------------------------------------
    def states(self, hi: int = 0) -> tuple[int, int]:
        st = self._states.get(hi)
        if st is None:
            st = (hash_state(self.seed, self.prefix_len, 1, hi), hash_state(self.seed, self.prefix_len, 2, hi))
            if len(self._states) >= 1 << 16:
                self._states.clear()
            self._states[hi] = st
        return st

    def _bases(self, lo: np.ndarray, s1, s2) -> tuple[np.ndarray, np.ndarray]:
        m = np.uint64(self.m)
        h1 = fmix64(np.asarray(s1, dtype=np.uint64) ^ lo)
        h2 = fmix64(np.asarray(s2, dtype=np.uint64) ^ lo)
        a = h1 % m
        b = h2 % np.uint64(self.m - 1) + np.uint64(1) if self.m > 1 else np.zeros_like(a)
        return a, b

    def _scalar_positions(self, prefix: int) -> list[int]:
        s1, s2 = self.states(prefix >> 64)
        lo = prefix & M64
        a = fmix64_int(s1 ^ lo) % self.m
        b = fmix64_int(s2 ^ lo) % (self.m - 1) + 1 if self.m > 1 else 0
        return [(a + i * b) % self.m for i in range(self.num_hashes)]

    def _check(self, prefix: int) -> None:
        if prefix < 0 or prefix >> self.prefix_len:
            raise InvalidPrefixError(f"{prefix} is not a {self.prefix_len}-bit prefix")

    # -- construction ----------------------------------------------------------
    def insert(self, prefix: int) -> None:
        if self._packed is not None:
            raise RuntimeError("filter is frozen")
        self._check(prefix)
        if self.m:
            self._bits[self._scalar_positions(prefix)] = True

    def insert_many(self, prefixes: Iterable[int] | np.ndarray) -> None:
        """Insert many prefixes; ``uint64`` arrays take a fully vectorised path."""
        if self._packed is not None:
            raise RuntimeError("filter is frozen")
        if not self.m:
            return
        if isinstance(prefixes, np.ndarray) and prefixes.dtype == np.uint64:
            if self.prefix_len < 64 and prefixes.size and int(prefixes.max()) >> self.prefix_len:
                raise InvalidPrefixError(f"value exceeds {self.prefix_len} bits")
            self._insert_lo(prefixes, *self.states(0))
            return
        vals = [int(p) for p in prefixes]
        for p in vals:
            self._check(p)
        lo, s1, s2 = self._split(vals)
        self._insert_lo(lo, s1, s2)

    def _split(self, vals: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Low limbs and per-element hash states of wide prefixes."""
        states = [self.states(v >> 64) for v in vals]
        lo = np.array([v & M64 for v in vals], dtype=np.uint64)
        s1 = np.array([a for a, _ in states], dtype=np.uint64)
        s2 = np.array([b for _, b in states], dtype=np.uint64)
        return lo, s1, s2

    def _insert_lo(self, lo: np.ndarray, s1, s2) -> None:
        m = np.uint64(self.m)
        step = max(1, (1 << 22) // max(self.num_hashes, 1))
        per_element = np.ndim(s1) > 0
        for start in range(0, lo.size, step):
            sl = slice(start, start + step)
            a, b = self._bases(lo[sl], s1[sl] if per_element else s1, s2[sl] if per_element else s2)
            for i in range(self.num_hashes):
                self._bits[(a + np.uint64(i) * b) % m] = True

    def freeze(self) -> "BloomFilter":
        if self._packed is None:
            self._packed = np.packbits(self._bits, bitorder="little")
            self._bits = None
        return self

    @property
    def frozen(self) -> bool:
        return self._packed is not None

    @property
    def bit_array(self) -> np.ndarray:
        """The packed bit array (little-endian bit order within bytes)."""
        if self._packed is not None:
            return self._packed
        return np.packbits(self._bits, bitorder="little")

    @property
    def size_bits(self) -> int:
        return self.m

    # -- queries -----------------------------------------------------------------
    def _test(self, pos: np.ndarray) -> np.ndarray:
        if self._packed is not None:
            return ((self._packed[pos >> np.uint64(3)] >> (pos & np.uint64(7)).astype(np.uint8)) & 1).astype(bool)
        return self._bits[pos]

    def contains(self, prefix: int) -> bool:
        self._check(prefix)
        if not self.m:
            return True
        pos = np.array(self._scalar_positions(prefix), dtype=np.uint64)
        return bool(self._test(pos).all())

    def contains_lo(self, lo: np.ndarray, s1, s2) -> np.ndarray:
        """Membership of prefixes given by their low limb and per-element (or shared) hash states."""
        lo = np.asarray(lo, dtype=np.uint64)
        if not self.m:
            return np.ones(lo.shape, dtype=bool)
        m = np.uint64(self.m)
        a, b = self._bases(lo, s1, s2)
        alive = np.ones(lo.shape, dtype=bool)
        idx = np.arange(lo.size)
        for i in range(self.num_hashes):
            hit = self._test((a + np.uint64(i) * b) % m)
            idx = idx[hit]
            if not idx.size:
                alive[:] = False
                return alive
            a, b = a[hit], b[hit]
        alive[:] = False
        alive[idx] = True
        return alive

    def contains_many(self, prefixes: np.ndarray | Iterable[int]) -> np.ndarray:
        """Vectorised :meth:`contains`."""
        if isinstance(prefixes, np.ndarray) and prefixes.dtype == np.uint64:
            return self.contains_lo(prefixes, *self.states(0))
        vals = [int(p) for p in prefixes]
        for p in vals:
            self._check(p)
        if not vals:
            return np.zeros(0, dtype=bool)
        return self.contains_lo(*self._split(vals))
