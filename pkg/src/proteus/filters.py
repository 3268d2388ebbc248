"""Range filters: prefix Bloom filter, two-level prefix Bloom filter and the trie+Bloom hybrid.

Every filter answers "may ``[left, right]`` contain a key?" with no false
negatives.  Prefixes are probed in ascending order and the search stops at the
first positive.  Each filter offers a scalar, instrumented :meth:`query` and a
vectorised :meth:`query_batch`; both return the same verdicts and probe counts.

A query that would need more than ``max_probes`` Bloom lookups is answered
positive once the cap is reached.  That keeps the answer sound (never a false
negative) while bounding the work spent on huge ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bloom import M64, BloomFilter
from .errors import InfeasibleDesignError, InvalidDesignError, ProteusError
from .keyspace import RangeQuery, SortedKeys
from .trie import UniformTrie

DEFAULT_MAX_PROBES = 1 << 24
SPLITS = (0.4, 0.5, 0.6)
FAMILIES = ("proteus", "pbf1", "pbf2")


@dataclass(frozen=True)
class DesignPoint:
    """One configuration of a filter family.

    ``l1`` is the trie depth (Proteus) or the short Bloom prefix (two-level);
    ``l2`` is the Bloom prefix length.  Zero means "absent".  A single-filter
    prefix Bloom filter uses ``l1 = 0``.  ``split`` is the fraction of the
    budget given to the short-prefix filter of the two-level family.
    """

    family: str
    l1: int
    l2: int
    budget: int
    split: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidDesignError(f"unknown filter family {self.family!r}")
        if self.budget < 0:
            raise InvalidDesignError("negative budget")
        if self.l1 < 0 or self.l2 < 0:
            raise InvalidDesignError("prefix lengths must be non-negative")
        if self.family == "proteus":
            if self.l1 == 0 and self.l2 == 0:
                raise InvalidDesignError("need a trie, a Bloom filter or both")
            if self.l1 and self.l2 and self.l1 >= self.l2:
                raise InvalidDesignError(f"trie depth {self.l1} must be shorter than Bloom prefix {self.l2}")
        elif self.family == "pbf1":
            if self.l1 != 0 or self.l2 < 1:
                raise InvalidDesignError("a prefix Bloom filter needs l1 = 0 and l2 >= 1")
        else:
            if not 1 <= self.l1 < self.l2:
                raise InvalidDesignError("two-level filter needs 1 <= l1 < l2")
            if self.split not in SPLITS:
                raise InvalidDesignError(f"split must be one of {SPLITS}")

    def check_width(self, width: int) -> None:
        if max(self.l1, self.l2) > width:
            raise InvalidDesignError(f"prefix length exceeds key width {width}")

    @classmethod
    def proteus(cls, l1: int, l2: int, budget: int) -> "DesignPoint":
        return cls("proteus", l1, l2, budget)

    @classmethod
    def pbf1(cls, l: int, budget: int) -> "DesignPoint":
        return cls("pbf1", 0, l, budget)

    @classmethod
    def pbf2(cls, l1: int, l2: int, split: float, budget: int) -> "DesignPoint":
        return cls("pbf2", l1, l2, budget, split)

    @property
    def label(self) -> str:
        if self.family == "pbf2":
            return f"pbf2({self.l1},{self.l2},{self.split})"
        return f"{self.family}({self.l1},{self.l2})"


@dataclass(frozen=True)
class QueryOutcome:
    positive: bool
    trie_probes: int = 0
    bloom_probes: int = 0
    capped: bool = False


@dataclass
class BatchOutcome:
    positive: np.ndarray
    trie_probes: np.ndarray
    bloom_probes: np.ndarray
    capped: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "BatchOutcome":
        z = lambda dt: np.zeros(n, dtype=dt)  # noqa: E731
        return cls(z(bool), z(np.int64), z(np.int64), z(bool))

    def __len__(self) -> int:
        return len(self.positive)

    def __getitem__(self, i: int) -> QueryOutcome:
        return QueryOutcome(bool(self.positive[i]), int(self.trie_probes[i]), int(self.bloom_probes[i]), bool(self.capped[i]))


# -- batch probing -----------------------------------------------------------------

def _to_u64(values) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype == np.uint64:
        return values
    return np.array([int(v) for v in values], dtype=np.uint64)


def _scan_segments(bloom: BloomFilter, hi: Sequence[int] | None, lo: np.ndarray, count: np.ndarray):
    """First positive in each run of consecutive prefixes ``hi:lo .. hi:lo+count-1``.

    Runs never cross a 64-bit boundary of the low limb.  Returns ``(hit, probes)``
    where ``probes`` counts lookups up to and including the first positive.
    """
    n = len(lo)
    hit = np.zeros(n, dtype=bool)
    probes = np.zeros(n, dtype=np.int64)
    if not n:
        return hit, probes
    if hi is None:
        s1 = np.full(n, bloom.states(0)[0], dtype=np.uint64)
        s2 = np.full(n, bloom.states(0)[1], dtype=np.uint64)
    else:
        st = [bloom.states(int(h)) for h in hi]
        s1 = np.array([a for a, _ in st], dtype=np.uint64)
        s2 = np.array([b for _, b in st], dtype=np.uint64)
    offset = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(count > 0)
    chunk = 4
    while active.size:
        chunk = max(1, min(chunk, (1 << 22) // active.size))
        take = np.minimum(count[active] - offset[active], chunk)
        total = int(take.sum())
        rid = np.repeat(active, take)
        starts = np.cumsum(take) - take
        j = np.arange(total, dtype=np.int64) - np.repeat(starts, take) + np.repeat(offset[active], take)
        ok = bloom.contains_lo(lo[rid] + j.astype(np.uint64), s1[rid], s2[rid])
        pos = np.flatnonzero(ok)
        if pos.size:
            first_rid, first_at = np.unique(rid[pos], return_index=True)
            hit[first_rid] = True
            probes[first_rid] = j[pos[first_at]] + 1
        offset[active] += take
        done = ~hit[active] & (offset[active] >= count[active])
        probes[active[done]] = count[active[done]]
        active = active[~hit[active] & ~done]
        chunk *= 2
    return hit, probes


def scan_runs(bloom: BloomFilter, start, count: np.ndarray, cap: np.ndarray):
    """First positive in runs of consecutive ``bloom.prefix_len``-bit prefixes.

    ``start`` holds the first prefix of each run (``uint64`` or Python ints),
    ``count`` the run lengths (already clipped to ``cap + 1``) and ``cap`` the
    remaining probe allowance per run.  A run longer than its allowance with no
    positive inside it reports ``capped``.

    Returns ``(hit, probes, capped)``; a capped run counts as a hit.
    """
    count = np.asarray(count, dtype=np.int64)
    cap = np.asarray(cap, dtype=np.int64)
    eff = np.minimum(count, cap)
    if bloom.prefix_len <= 64:
        hit, probes = _scan_segments(bloom, None, _to_u64(start), eff)
    else:
        # split each run where the low limb wraps
        starts = [int(s) for s in start]
        hi = [s >> 64 for s in starts]
        lo = np.array([s & M64 for s in starts], dtype=np.uint64)
        room = np.array([(1 << 64) - (s & M64) for s in starts], dtype=object)
        first = np.array([min(int(e), int(r)) for e, r in zip(eff, room)], dtype=np.int64)
        hit, probes = _scan_segments(bloom, hi, lo, first)
        rest = np.flatnonzero(~hit & (eff > first))
        if rest.size:
            h2, p2 = _scan_segments(
                bloom,
                [hi[i] + 1 for i in rest],
                np.zeros(rest.size, dtype=np.uint64),
                eff[rest] - first[rest],
            )
            hit[rest] = h2
            probes[rest] += p2
    capped = ~hit & (count > cap)
    return hit | capped, probes, capped


def _shift(values, s: int):
    if isinstance(values, np.ndarray) and values.dtype == np.uint64:
        return values >> np.uint64(s)
    return np.array([int(v) >> s for v in values], dtype=object)


def _run_counts(first, last, limit: int) -> np.ndarray:
    """``min(last - first + 1, limit + 1)`` as ``int64`` without overflow."""
    if isinstance(first, np.ndarray) and first.dtype == np.uint64:
        diff = np.asarray(last, dtype=np.uint64) - first
        return np.where(diff >= np.uint64(limit), limit + 1, diff.astype(np.int64) + 1)
    return np.array([min(int(b) - int(a) + 1, limit + 1) for a, b in zip(first, last)], dtype=np.int64)


def _bounds(width: int, left, right):
    if width <= 64:
        l = np.asarray(left, dtype=np.uint64)
        r = np.asarray(right, dtype=np.uint64)
    else:
        l = np.array([int(v) for v in left], dtype=object)
        r = np.array([int(v) for v in right], dtype=object)
    if len(l) != len(r):
        raise ValueError("left and right bounds differ in length")
    if len(l) and np.any(l > r):
        raise ValueError("query with left > right")
    return l, r


def _keys(keys) -> SortedKeys:
    if isinstance(keys, SortedKeys):
        if not len(keys):
            raise ProteusError("cannot build a filter over zero keys")
        return keys
    raise TypeError("keys must be a SortedKeys instance")


def _unique_prefixes(keys: SortedKeys, l: int):
    shift = keys.width - l
    if keys.width <= 64:
        return np.unique(keys.array >> np.uint64(shift))
    return keys.prefixes(l)


def _new_bloom(m: int, prefixes, l: int, seed: int) -> BloomFilter:
    bf = BloomFilter(m, len(prefixes), l, seed)
    bf.insert_many(prefixes)
    return bf.freeze()


class RangeFilter:
    """Shared plumbing: key width, design and sound handling of the probe cap."""

    design: DesignPoint
    width: int
    max_probes: int

    @property
    def size_bits(self) -> int:
        raise NotImplementedError

    def query(self, q: RangeQuery, short_circuit: bool = True) -> QueryOutcome:
        raise NotImplementedError

    def query_batch(self, left, right) -> BatchOutcome:
        raise NotImplementedError

    def may_contain(self, q: RangeQuery) -> bool:
        return self.query(q).positive

    def _check(self, q: RangeQuery) -> None:
        q.check_width(self.width)


class ProteusFilter(RangeFilter):
    """Uniform-depth trie at ``l1`` gating a prefix Bloom filter at ``l2``.

    With ``l1 = 0`` this is a plain prefix Bloom filter; with ``l2 = 0`` the
    trie alone answers at ``l1`` granularity.
    """

    def __init__(self, keys: SortedKeys, design: DesignPoint, seed: int = 0, max_probes: int = DEFAULT_MAX_PROBES):
        keys = _keys(keys)
        design.check_width(keys.width)
        self.design = design
        self.width = keys.width
        self.seed = seed
        self.max_probes = max_probes
        self.l1, self.l2 = design.l1, design.l2
        self.trie: UniformTrie | None = None
        self.bloom: BloomFilter | None = None
        trie_bits = 0
        if self.l1:
            self.trie = UniformTrie(_unique_prefixes(keys, self.l1), self.l1)
            trie_bits = self.trie.size_bits
            if trie_bits > design.budget:
                raise InfeasibleDesignError(f"trie at depth {self.l1} needs {trie_bits} bits, budget is {design.budget}")
        if self.l2:
            self.bloom = _new_bloom(design.budget - trie_bits, _unique_prefixes(keys, self.l2), self.l2, seed)

    @property
    def size_bits(self) -> int:
        return (self.trie.size_bits if self.trie else 0) + (self.bloom.size_bits if self.bloom else 0)

    # -- scalar -----------------------------------------------------------------
    def query(self, q: RangeQuery, short_circuit: bool = True) -> QueryOutcome:
        self._check(q)
        k = self.width
        if self.trie is None:
            regions = [None]
        else:
            regions = self.trie.probe(q.left >> (k - self.l1), q.right >> (k - self.l1))
        positive = capped = False
        trie_probes = bloom_probes = 0
        for x in regions:
            if x is not None:
                trie_probes += 1
            if self.bloom is None:
                positive = True
                break
            s = k - self.l2
            first, last = q.left >> s, q.right >> s
            if x is not None:
                d = self.l2 - self.l1
                first, last = max(first, x << d), min(last, (x << d) | ((1 << d) - 1))
            for y in range(first, last + 1):
                if bloom_probes == self.max_probes:
                    positive = capped = True
                    break
                bloom_probes += 1
                if self.bloom.contains(y):
                    positive = True
                    if short_circuit:
                        break
            if capped or (positive and short_circuit):
                break
        return QueryOutcome(positive, trie_probes, bloom_probes, capped)

    # -- batch ------------------------------------------------------------------
    def query_batch(self, left, right) -> BatchOutcome:
        left, right = _bounds(self.width, left, right)
        n = len(left)
        out = BatchOutcome.empty(n)
        if not n:
            return out
        k = self.width
        if self.trie is None:
            s = k - self.l2
            first, last = _shift(left, s), _shift(right, s)
            cap = np.full(n, self.max_probes, dtype=np.int64)
            hit, probes, capped = scan_runs(self.bloom, first, _run_counts(first, last, self.max_probes), cap)
            out.positive[:], out.bloom_probes[:], out.capped[:] = hit, probes, capped
            return out

        leaves = self.trie.leaves()
        t = k - self.l1
        lo_i = np.searchsorted(leaves, _shift(left, t), side="left").astype(np.int64)
        hi_i = np.searchsorted(leaves, _shift(right, t), side="right").astype(np.int64)
        if self.bloom is None:
            out.positive[:] = hi_i > lo_i
            out.trie_probes[:] = np.minimum(hi_i - lo_i, 1)
            return out

        s = k - self.l2
        d = self.l2 - self.l1
        qfirst, qlast = _shift(left, s), _shift(right, s)
        active = np.flatnonzero(hi_i > lo_i)
        wave = 0
        while active.size:
            x = leaves[lo_i[active] + wave]
            if self.l2 <= 64:
                x = x.astype(np.uint64)
                a = np.maximum(qfirst[active], x << np.uint64(d))
                b = np.minimum(qlast[active], (x << np.uint64(d)) | np.uint64((1 << d) - 1))
            else:
                mask = (1 << d) - 1
                a = np.array([max(int(f), int(v) << d) for f, v in zip(qfirst[active], x)], dtype=object)
                b = np.array([min(int(f), (int(v) << d) | mask) for f, v in zip(qlast[active], x)], dtype=object)
            cap = self.max_probes - out.bloom_probes[active]
            hit, probes, capped = scan_runs(self.bloom, a, _run_counts(a, b, self.max_probes), cap)
            out.trie_probes[active] += 1
            out.bloom_probes[active] += probes
            out.positive[active] = hit
            out.capped[active] = capped
            wave += 1
            active = active[~hit & (lo_i[active] + wave < hi_i[active])]
        return out


class PrefixBloomFilter(ProteusFilter):
    """A single prefix Bloom filter at length ``l``: the trie-less special case."""

    def __init__(self, keys: SortedKeys, design: DesignPoint, seed: int = 0, max_probes: int = DEFAULT_MAX_PROBES):
        if design.family != "pbf1":
            raise InvalidDesignError("expected a pbf1 design")
        super().__init__(keys, design, seed, max_probes)


class TwoLevelBloomFilter(RangeFilter):
    """Two prefix Bloom filters: a short prefix ``l1`` gates probes at ``l2``."""

    def __init__(self, keys: SortedKeys, design: DesignPoint, seed: int = 0, max_probes: int = DEFAULT_MAX_PROBES):
        keys = _keys(keys)
        if design.family != "pbf2":
            raise InvalidDesignError("expected a pbf2 design")
        design.check_width(keys.width)
        self.design = design
        self.width = keys.width
        self.max_probes = max_probes
        self.l1, self.l2 = design.l1, design.l2
        m1 = math.ceil(design.split * design.budget)
        self.short = _new_bloom(m1, _unique_prefixes(keys, self.l1), self.l1, seed)
        self.long = _new_bloom(design.budget - m1, _unique_prefixes(keys, self.l2), self.l2, seed + 1)

    @property
    def size_bits(self) -> int:
        return self.short.size_bits + self.long.size_bits

    def query(self, q: RangeQuery, short_circuit: bool = True) -> QueryOutcome:
        self._check(q)
        k, d = self.width, self.l2 - self.l1
        s1, s2 = k - self.l1, k - self.l2
        probes = 0
        positive = capped = False
        for x in range(q.left >> s1, (q.right >> s1) + 1):
            if probes == self.max_probes:
                return QueryOutcome(True, 0, probes, True)
            probes += 1
            if not self.short.contains(x):
                continue
            first = max(q.left >> s2, x << d)
            last = min(q.right >> s2, (x << d) | ((1 << d) - 1))
            for y in range(first, last + 1):
                if probes == self.max_probes:
                    return QueryOutcome(True, 0, probes, True)
                probes += 1
                if self.long.contains(y):
                    positive = True
                    if short_circuit:
                        return QueryOutcome(True, 0, probes, capped)
        return QueryOutcome(positive, 0, probes, capped)

    def query_batch(self, left, right) -> BatchOutcome:
        left, right = _bounds(self.width, left, right)
        n = len(left)
        out = BatchOutcome.empty(n)
        if not n:
            return out
        k, d, cap = self.width, self.l2 - self.l1, self.max_probes
        s1, s2 = k - self.l1, k - self.l2
        first1, last1 = _shift(left, s1), _shift(right, s1)
        qfirst, qlast = _shift(left, s2), _shift(right, s2)
        total1 = _run_counts(first1, last1, cap)
        done1 = np.zeros(n, dtype=np.int64)  # short-filter prefixes examined so far
        active = np.arange(n)
        chunk = 16
        while active.size:
            chunk = max(1, min(chunk, (1 << 22) // active.size))
            take = np.minimum(total1[active] - done1[active], chunk)
            rid = np.repeat(active, take)
            off = np.arange(int(take.sum()), dtype=np.int64) - np.repeat(np.cumsum(take) - take, take)
            if self.l1 <= 64:
                xs = first1[rid] + (off + done1[rid]).astype(np.uint64)
            else:
                xs = np.array([int(first1[r]) + int(o) for r, o in zip(rid, off + done1[rid])], dtype=object)
            gated = np.flatnonzero(self.short.contains_many(xs)) if len(xs) else np.zeros(0, dtype=np.int64)
            spent = out.bloom_probes.copy()  # probes charged before this chunk
            long_used = np.zeros(n, dtype=np.int64)
            resolved = np.zeros(n, dtype=bool)
            if gated.size:
                g_rid = rid[gated]
                new_q = np.ones(gated.size, dtype=bool)
                new_q[1:] = g_rid[1:] != g_rid[:-1]
                group_start = np.maximum.accumulate(np.where(new_q, np.arange(gated.size), 0))
                rank = np.arange(gated.size) - group_start
                for w in range(int(rank.max()) + 1):
                    sel = gated[(rank == w) & ~resolved[g_rid]]
                    if not sel.size:
                        continue
                    qi = rid[sel]
                    x = xs[sel]
                    if self.l2 <= 64:
                        x = x.astype(np.uint64)
                        a = np.maximum(qfirst[qi], x << np.uint64(d))
                        b = np.minimum(qlast[qi], (x << np.uint64(d)) | np.uint64((1 << d) - 1))
                    else:
                        mask = (1 << d) - 1
                        a = np.array([max(int(f), int(v) << d) for f, v in zip(qfirst[qi], x)], dtype=object)
                        b = np.array([min(int(f), (int(v) << d) | mask) for f, v in zip(qlast[qi], x)], dtype=object)
                    before = spent[qi] + off[sel] + 1 + long_used[qi]
                    over = before > cap
                    allowance = np.maximum(cap - before, 0)
                    hit, probes, capped = scan_runs(self.long, a, _run_counts(a, b, cap), allowance)
                    hit |= over
                    capped |= over
                    probes = np.where(over, 0, probes)
                    long_used[qi] += probes
                    out.positive[qi] = hit
                    out.capped[qi] = capped
                    out.bloom_probes[qi] = np.where(over | capped, cap, before + probes)
                    resolved[qi] = hit
            rest = active[~resolved[active]]
            spent_now = spent[rest] + take[~resolved[active]] + long_used[rest]
            over = spent_now > cap
            out.positive[rest[over]] = out.capped[rest[over]] = True
            out.bloom_probes[rest] = np.where(over, cap, spent_now)
            done1[rest] += take[~resolved[active]]
            keep = ~over & (done1[rest] < total1[rest])
            active = rest[keep]
            chunk *= 2
        return out


def build_proteus(keys: SortedKeys, design: DesignPoint, seed: int = 0, **kw) -> ProteusFilter:
    if design.family != "proteus":
        raise InvalidDesignError("expected a proteus design")
    return ProteusFilter(keys, design, seed, **kw)


def build_1pbf(keys: SortedKeys, design: DesignPoint, seed: int = 0, **kw) -> PrefixBloomFilter:
    return PrefixBloomFilter(keys, design, seed, **kw)


def build_2pbf(keys: SortedKeys, design: DesignPoint, seed: int = 0, **kw) -> TwoLevelBloomFilter:
    return TwoLevelBloomFilter(keys, design, seed, **kw)


def build_filter(keys: SortedKeys, design: DesignPoint, seed: int = 0, **kw) -> RangeFilter:
    """Build whichever filter ``design.family`` names."""
    builder = {"proteus": build_proteus, "pbf1": build_1pbf, "pbf2": build_2pbf}[design.family]
    return builder(keys, design, seed, **kw)
