"""Vectorised bit tricks and a rank/select bit vector."""

from __future__ import annotations

import numpy as np

RANK_BLOCK = 256
RANK_ENTRY_BITS = 32


def bit_length(x: np.ndarray) -> np.ndarray:
    """Element-wise ``int.bit_length`` for ``uint64`` (or object) arrays."""
    if x.dtype == object:
        return np.fromiter((int(v).bit_length() for v in x), dtype=np.int64, count=x.size)
    x = x.astype(np.uint64, copy=True)
    n = np.zeros(x.shape, dtype=np.int64)
    for s in (32, 16, 8, 4, 2, 1):
        big = (x >> np.uint64(s)) != 0
        n += big * s
        x = np.where(big, x >> np.uint64(s), x)
    return n + (x != 0)


def trailing_zeros(x: np.ndarray, width: int) -> np.ndarray:
    """Trailing zero count, with ``width`` returned for zero."""
    if x.dtype == object:
        return np.fromiter(((int(v) & -int(v)).bit_length() - 1 if v else width for v in x), dtype=np.int64, count=x.size)
    x = x.astype(np.uint64)
    low = x & (~x + np.uint64(1))
    out = bit_length(low) - 1
    return np.where(x == 0, width, out)


def lcp_array(a: np.ndarray, b: np.ndarray, width: int) -> np.ndarray:
    """Element-wise longest common prefix of two key arrays."""
    if a.dtype == object or b.dtype == object:
        return np.fromiter((width - (int(x) ^ int(y)).bit_length() for x, y in zip(a, b)), dtype=np.int64, count=len(a))
    return width - bit_length(a ^ b)


class BitVector:
    """Packed bit vector with an optional rank directory.

    The directory stores one 32-bit cumulative popcount per 256-bit block
    (12.5% overhead); ``select1`` binary-searches it and scans one block, so it
    needs no extra space.
    """

    def __init__(self, bits: np.ndarray, rank: bool = True):
        bits = np.asarray(bits, dtype=bool)
        self.n = int(bits.size)
        nwords = (self.n + 63) // 64
        padded = np.zeros(nwords * 64, dtype=bool)
        padded[: self.n] = bits
        self.words = np.packbits(padded, bitorder="little").view(np.uint64)
        self._w = [int(w) for w in self.words]
        self.has_rank = rank
        if rank:
            per_block = RANK_BLOCK // 64
            pop = np.bitwise_count(self.words).astype(np.int64)
            nblocks = (nwords + per_block - 1) // per_block
            block_pop = np.add.reduceat(pop, np.arange(0, nwords, per_block)) if nwords else np.zeros(0, np.int64)
            self.directory = np.concatenate([[0], np.cumsum(block_pop)[:-1]]).astype(np.uint32)[:nblocks]
            self.ones = int(pop.sum())
        else:
            self.directory = np.zeros(0, dtype=np.uint32)
            self.ones = int(np.bitwise_count(self.words).sum())

    def __len__(self) -> int:
        return self.n

    @property
    def size_bits(self) -> int:
        return self.n + RANK_ENTRY_BITS * len(self.directory)

    def get(self, i: int) -> int:
        return (self._w[i >> 6] >> (i & 63)) & 1

    def to_bool(self) -> np.ndarray:
        return np.unpackbits(self.words.view(np.uint8), bitorder="little")[: self.n].astype(bool)

    def rank1(self, i: int) -> int:
        """Number of ones in positions ``[0, i]``."""
        block = i >> 8
        r = int(self.directory[block])
        w = i >> 6
        for j in range(block * 4, w):
            r += self._w[j].bit_count()
        return r + (self._w[w] & ((2 << (i & 63)) - 1)).bit_count()

    def select1(self, j: int) -> int:
        """Position of the ``j``-th one (1-based)."""
        if not 1 <= j <= self.ones:
            raise IndexError(f"select1({j}) with {self.ones} ones")
        block = int(np.searchsorted(self.directory, j, side="left")) - 1
        r = int(self.directory[block])
        w = block * 4
        while True:
            c = self._w[w].bit_count()
            if r + c >= j:
                break
            r += c
            w += 1
        word = self._w[w]
        for bit in range(64):
            if (word >> bit) & 1:
                r += 1
                if r == j:
                    return w * 64 + bit
        raise AssertionError("unreachable")
