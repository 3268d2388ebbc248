"""Fixed-width keys, range queries and prefix arithmetic.

Keys are plain Python ints interpreted as unsigned big-endian bit strings of a
fixed ``width``.  Integer workloads use ``width=64``; string workloads pad every
byte string with trailing nulls and read it as a big-endian integer, so numeric
order and lexicographic order coincide.  Prefix extraction is a right shift.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidDesignError,
    InvalidLengthError,
    InvalidQueryError,
    PadOverflowError,
    QueryNotEmptyError,
)


def _check_length(l: int, width: int, lo: int = 0) -> None:
    if not lo <= l <= width:
        raise InvalidLengthError(f"prefix length {l} outside [{lo}, {width}]")


def prefix(key: int, l: int, width: int) -> int:
    """Return the top ``l`` bits of ``key``; ``l == 0`` yields the empty prefix ``0``."""
    _check_length(l, width)
    return key >> (width - l)


def lcp(a: int, b: int, width: int) -> int:
    """Length of the longest common prefix of two ``width``-bit keys."""
    return width - (a ^ b).bit_length()


@dataclass(frozen=True)
class RangeQuery:
    """Inclusive interval ``[left, right]`` of the key space."""

    left: int
    right: int

    def __post_init__(self) -> None:
        if self.left < 0:
            raise InvalidQueryError(f"negative left bound {self.left}")
        if self.left > self.right:
            raise InvalidQueryError(f"left {self.left} > right {self.right}")

    def check_width(self, width: int) -> None:
        if self.right >> width:
            raise InvalidQueryError(f"right bound {self.right} exceeds {width}-bit key space")

    @classmethod
    def clamped(cls, left: int, right: int, width: int) -> "RangeQuery":
        """Build a query, clamping both bounds into ``[0, 2**width - 1]``."""
        top = (1 << width) - 1
        return cls(min(max(left, 0), top), min(max(right, 0), top))


@dataclass(frozen=True)
class PrefixCover:
    """The ``l``-bit prefixes covering a query: ``first .. last`` inclusive."""

    length: int
    count: int
    first: int
    last: int


def prefix_count(q: RangeQuery, l: int, width: int) -> PrefixCover:
    """Return the prefix cover ``Q_l`` of ``q`` as bounds plus its size."""
    _check_length(l, width, lo=1)
    shift = width - l
    first, last = q.left >> shift, q.right >> shift
    return PrefixCover(l, last - first + 1, first, last)


class SortedKeys:
    """An immutable sorted, de-duplicated key set of fixed width.

    ``array`` mirrors ``values`` as ``uint64`` when ``width <= 64`` (object
    dtype otherwise) so batch code can use ``np.searchsorted``.
    """

    def __init__(self, values: Iterable[int], width: int, *, presorted: bool = False):
        if width < 1:
            raise InvalidLengthError("key width must be positive")
        vals = list(values) if presorted else sorted(set(values))
        if presorted and any(vals[i] >= vals[i + 1] for i in range(len(vals) - 1)):
            raise ValueError("presorted keys must be strictly ascending")
        if vals and (vals[0] < 0 or vals[-1] >> width):
            raise InvalidLengthError(f"key outside {width}-bit key space")
        self.width = width
        self.values: list[int] = vals
        self.array = as_key_array(vals, width)

    @classmethod
    def from_array(cls, arr: np.ndarray, width: int = 64) -> "SortedKeys":
        arr = np.unique(np.asarray(arr, dtype=np.uint64))
        out = cls.__new__(cls)
        out.width = width
        out.values = arr.tolist()
        out.array = arr
        return out

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def neighbors(self, q: RangeQuery) -> tuple[int | None, int | None]:
        """Nearest key strictly below ``q.left`` and strictly above ``q.right``."""
        return _neighbors(self.values, q)

    def intersects(self, q: RangeQuery) -> bool:
        i = bisect.bisect_left(self.values, q.left)
        return i < len(self.values) and self.values[i] <= q.right

    def prefixes(self, l: int) -> list[int]:
        """Sorted unique ``l``-bit prefixes ``K_l``."""
        _check_length(l, self.width)
        shift = self.width - l
        out: list[int] = []
        for v in self.values:
            p = v >> shift
            if not out or out[-1] != p:
                out.append(p)
        return out

    def subset(self, lo: int, hi: int) -> "SortedKeys":
        """Keys in ``[lo, hi]`` as a new key set."""
        i = bisect.bisect_left(self.values, lo)
        j = bisect.bisect_right(self.values, hi)
        out = SortedKeys.__new__(SortedKeys)
        out.width = self.width
        out.values = self.values[i:j]
        out.array = self.array[i:j]
        return out


def as_key_array(values: Sequence[int], width: int) -> np.ndarray:
    if width <= 64:
        return np.array(values, dtype=np.uint64)
    arr = np.empty(len(values), dtype=object)
    arr[:] = list(values)
    return arr


def _neighbors(keys: Sequence[int], q: RangeQuery) -> tuple[int | None, int | None]:
    i = bisect.bisect_left(keys, q.left)
    pred = keys[i - 1] if i > 0 else None
    j = bisect.bisect_right(keys, q.right)
    succ = keys[j] if j < len(keys) else None
    if j > i:
        raise QueryNotEmptyError(f"query [{q.left}, {q.right}] contains {j - i} key(s)")
    return pred, succ


def interval_lcp(q: RangeQuery, keys: Sequence[int], width: int) -> int:
    """Longest common prefix between any value of an empty query and any key.

    Only the two sorted neighbours matter: a common prefix of ``y < left`` and
    ``x`` in the query is shared by every value between them, in particular by
    ``pred(left)`` and ``left``.
    """
    pred, succ = _neighbors(keys, q)
    best = 0
    if pred is not None:
        best = lcp(pred, q.left, width)
    if succ is not None:
        best = max(best, lcp(succ, q.right, width))
    return best


@dataclass(frozen=True)
class EndpointAnalysis:
    """How the end ``l1``-regions of a query line up with the query and the keys.

    ``i0``/``i1``: the first/last ``l1``-region extends beyond the query.
    ``i2``/``i3``: the first/last ``l1``-prefix is a key prefix (a trie hit).
    ``l_size``/``r_size``: ``l2``-prefixes of the query inside those regions.
    A query covered by a single ``l1``-region is attributed entirely to the
    left side, so ``i1 = i3 = r_size = 0``.
    """

    i0: int
    i1: int
    i2: int
    i3: int
    l_size: int
    r_size: int
    single: bool

    @property
    def n_regions(self) -> int:
        """Bloom probes needed by a trie-gated filter: ``i2*|L| + i3*|R|``."""
        return self.i2 * self.l_size + self.i3 * self.r_size


def _has_prefix(keys: Sequence[int], p: int, l: int, width: int) -> bool:
    shift = width - l
    lo = p << shift
    i = bisect.bisect_left(keys, lo)
    return i < len(keys) and keys[i] >> shift == p


def endpoint_analysis(q: RangeQuery, keys: Sequence[int], width: int, l1: int, l2: int) -> EndpointAnalysis:
    if not 0 <= l1 < l2 <= width:
        raise InvalidDesignError(f"need 0 <= l1 < l2 <= width, got l1={l1}, l2={l2}")
    _neighbors(keys, q)  # emptiness precondition
    s1, s2 = width - l1, width - l2
    first, last = q.left >> s1, q.right >> s1
    region = (1 << s1) - 1
    i0 = int((q.left & region) != 0 or (first == last and (q.right & region) != region))
    present_first = _has_prefix(keys, first, l1, width)
    if first == last:
        l_size = (q.right >> s2) - (q.left >> s2) + 1
        return EndpointAnalysis(i0, 0, int(present_first), 0, l_size, 0, True)
    i1 = int((q.right & region) != region)
    present_last = _has_prefix(keys, last, l1, width)
    span = 1 << (l2 - l1)
    l_size = span - ((q.left >> s2) & (span - 1))
    r_size = ((q.right >> s2) & (span - 1)) + 1
    return EndpointAnalysis(i0, i1, int(present_first), int(present_last), l_size, r_size, False)


def pad(raw: bytes, target: int) -> bytes:
    """Extend ``raw`` with trailing ``0x00`` bytes to ``target`` bytes."""
    if len(raw) > target:
        raise PadOverflowError(f"{len(raw)}-byte string exceeds pad target {target}")
    return raw + b"\x00" * (target - len(raw))


def bytes_to_key(raw: bytes) -> int:
    return int.from_bytes(raw, "big")


def key_to_bytes(key: int, nbytes: int) -> bytes:
    return key.to_bytes(nbytes, "big")
