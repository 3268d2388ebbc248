"""Expected false-positive rates of prefix-filter designs, and design selection.

The model needs two things from the data: the number of unique key prefixes at
every length, and for every sample query its proximity to the key set (the
longest prefix it shares with any key) and how many prefixes cover it.  Both
are budget-independent, so :class:`SampleModel` extracts them once and can
then rank every design for any number of budgets.

Per-design expected FPR is the sample mean of per-query probabilities.
Queries that need Bloom probes are grouped by probe count into exponentially
sized bins and each bin is evaluated once at its mean probe count.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bitops import RANK_BLOCK, RANK_ENTRY_BITS, bit_length, lcp_array, trailing_zeros
from .bloom import plan_fpr
from .errors import InfeasibleDesignError, InvalidDesignError, ProteusError
from .filters import SPLITS, DesignPoint
from .keyspace import EndpointAnalysis, PrefixCover, RangeQuery, SortedKeys, _neighbors, lcp
from .trie import HEADER_BITS, LEVEL_META_BITS, best_cutoff, prefix_level_counts

REGION_CAP = 2.0 ** 1000  # probe counts beyond this are treated as this (FPR is 1 by then)
COARSE_CANDIDATES = 128


# -- key-side statistics -------------------------------------------------------------

def count_key_prefixes(keys: SortedKeys | np.ndarray | Sequence[int], width: int | None = None) -> np.ndarray:
    """``counts[l]`` = number of unique ``l``-bit key prefixes, ``l = 0..width``.

    Derived from successive LCPs of the sorted keys; duplicates are ignored.
    """
    if isinstance(keys, SortedKeys):
        width, arr = keys.width, keys.array
    else:
        if width is None:
            raise ValueError("width is required for raw key arrays")
        arr = np.asarray(keys, dtype=np.uint64) if width <= 64 else np.array([int(v) for v in keys], dtype=object)
    if not len(arr):
        raise ProteusError("cannot count prefixes of an empty key set")
    return np.asarray(prefix_level_counts(arr, width), dtype=np.int64)


def trie_mem(l1: int, counts: Sequence[int]) -> int:
    """Estimated bits of a depth-``l1`` trie (an upper bound on the built size)."""
    if l1 == 0:
        return 0
    return best_cutoff(l1, counts)[1]


def trie_mem_table(counts: Sequence[int]) -> np.ndarray:
    """:func:`trie_mem` for every depth ``0..k`` at once (same integers, vectorised over cutoffs)."""
    counts = np.asarray(counts, dtype=np.int64)
    k = len(counts) - 1
    out = np.zeros(k + 1, dtype=np.int64)
    node_sum = np.concatenate([[0], np.cumsum(counts)])

    def ranked(bits):
        return bits + RANK_ENTRY_BITS * (-(-bits // RANK_BLOCK))

    for l1 in range(1, k + 1):
        c = np.arange(l1 + 1)
        dense = 2 * ranked(2 * node_sum[c])
        edges = node_sum[l1 + 1] - node_sum[c + 1]
        out[l1] = int((dense + edges + 2 * ranked(edges)).min()) + LEVEL_META_BITS * l1 + HEADER_BITS
    return out


# -- per-query statistics ------------------------------------------------------------

@dataclass(frozen=True)
class QueryStats:
    """Everything the model needs about one empty query.

    ``lcp`` is the longest prefix any value of the query shares with any key.
    ``left_lcp`` / ``right_lcp`` are the longest prefixes ``left`` / ``right``
    share with any key; the first (last) ``l1``-prefix of the query is a key
    prefix exactly when ``left_lcp >= l1`` (``right_lcp >= l1``).
    """

    left: int
    right: int
    width: int
    lcp: int
    left_lcp: int
    right_lcp: int

    @property
    def common(self) -> int:
        """Bits shared by ``left`` and ``right``."""
        return lcp(self.left, self.right, self.width)

    def cover(self, l: int) -> PrefixCover:
        s = self.width - l
        first, last = self.left >> s, self.right >> s
        return PrefixCover(l, last - first + 1, first, last)

    def endpoints(self, l1: int, l2: int) -> EndpointAnalysis:
        """Endpoint indicators and end-region probe counts for the split ``l1 < l2``."""
        k = self.width
        if not 0 <= l1 < l2 <= k:
            raise InvalidDesignError(f"need 0 <= l1 < l2 <= {k}, got ({l1}, {l2})")
        s1, s2 = k - l1, k - l2
        region = (1 << s1) - 1
        single = (self.left >> s1) == (self.right >> s1)
        i0 = int((self.left & region) != 0 or (single and (self.right & region) != region))
        i2 = int(self.left_lcp >= l1)
        if single:
            return EndpointAnalysis(i0, 0, i2, 0, (self.right >> s2) - (self.left >> s2) + 1, 0, True)
        span = 1 << (l2 - l1)
        l_size = span - ((self.left >> s2) & (span - 1))
        r_size = ((self.right >> s2) & (span - 1)) + 1
        i1 = int((self.right & region) != region)
        return EndpointAnalysis(i0, i1, i2, int(self.right_lcp >= l1), l_size, r_size, False)

    def n_regions(self, l1: int, l2: int) -> int:
        return self.endpoints(l1, l2).n_regions


def query_stats(q: RangeQuery, keys: SortedKeys) -> QueryStats:
    """Statistics of an empty query; raises if ``q`` contains a key."""
    q.check_width(keys.width)
    pred, succ = _neighbors(keys.values, q)
    k = keys.width
    lp = lcp(pred, q.left, k) if pred is not None else 0
    rs = lcp(succ, q.right, k) if succ is not None else 0
    a = max(lp, lcp(succ, q.left, k) if succ is not None else 0)
    b = max(rs, lcp(pred, q.right, k) if pred is not None else 0)
    return QueryStats(q.left, q.right, k, max(lp, rs), a, b)


# -- closed forms ------------------------------------------------------------------

def _neg(p: float, n: float) -> float:
    """``(1 - p) ** n`` with the conventions ``n = 0 -> 1`` and ``p = 1 -> 0``."""
    if n == 0:
        return 1.0
    if p >= 1.0:
        return 0.0
    return math.exp(n * math.log1p(-p))


def fpr_1pbf(qs: QueryStats, l: int, p: float) -> float:
    """A prefix Bloom filter at length ``l``: certain positive once ``l <= lcp``."""
    if l <= qs.lcp:
        return 1.0
    return 1.0 - _neg(p, qs.cover(l).count)


def fpr_proteus(qs: QueryStats, l1: int, l2: int, p: float) -> float:
    """Trie at ``l1`` (0 = none) gating a Bloom filter at ``l2`` (0 = none)."""
    if l1 and qs.lcp < l1:
        return 0.0
    if l2 == 0:
        return 1.0
    if l2 <= qs.lcp:
        return 1.0
    return 1.0 - _neg(p, qs.n_regions(l1, l2))


def _binomial_window(n: int, p: float) -> tuple[int, int]:
    """Index range holding all but a negligible tail of the Binomial(n, p) mass."""
    mu, sd = n * p, math.sqrt(n * p * (1 - p))
    return max(0, int(mu - 40 * sd - 40)), min(n, int(mu + 40 * sd + 40))


def binomial_gate_sum(n: int, p1: float, x: float) -> float:
    """``sum_i Binom(n, p1)(i) * x**i`` summed term by term.

    Terms are built from the ratio of successive PMF values and normalised by
    their own total, so no factorial-scale quantity ever enters the sum.
    """
    if n == 0 or p1 <= 0.0:
        return 1.0
    if p1 >= 1.0:
        return x ** n
    lo, hi = _binomial_window(n, p1)
    log_x = math.log(x) if x > 0 else -math.inf
    odds = math.log(p1) - math.log1p(-p1)
    ref, s_w, s_t, carry = -math.inf, 0.0, 0.0, 0.0
    for start in range(lo, hi + 1, 1 << 16):
        i = np.arange(start, min(hi, start + (1 << 16) - 1) + 1, dtype=np.float64)
        # log pmf(i+1) - log pmf(i); the entry at i = n is never used
        step = np.log(np.maximum(n - i, 1.0)) - np.log(i + 1.0) + odds
        logw = carry + np.concatenate(([0.0], np.cumsum(step[:-1])))
        carry = float(logw[-1] + step[-1])
        with np.errstate(invalid="ignore"):
            logt = logw + np.where(i == 0, 0.0, i * log_x)
        top = float(logw.max())
        if top > ref:
            scale = math.exp(ref - top) if ref > -math.inf else 0.0
            s_w, s_t, ref = s_w * scale, s_t * scale, top
        s_w += float(np.exp(logw - ref).sum())
        s_t += float(np.exp(logt - ref).sum())
    return s_t / s_w


def _two_level_terms(qs: QueryStats, l1: int, l2: int):
    e = qs.endpoints(l1, l2)
    n_gate = qs.cover(l1).count - e.i0 - e.i1
    if e.single:
        not_left, not_right = 1, 0
    else:
        not_left, not_right = 1 - e.i2, 1 - e.i3
    return e, n_gate, not_left, not_right


def fpr_2pbf(qs: QueryStats, l1: int, l2: int, p1: float, p2: float, form: str = "verbatim") -> float:
    """Two prefix Bloom filters with FP rates ``p1`` (length ``l1``) and ``p2`` (length ``l2``).

    ``form="verbatim"`` subtracts the two end-region terms and the binomial sum
    from one, clamped to [0, 1].  ``form="independent"`` multiplies the
    per-region probabilities of a negative instead, which is what independent
    probes imply; the two differ whenever an end region is partial.
    """
    if not 1 <= l1 < l2 <= qs.width:
        raise InvalidDesignError(f"need 1 <= l1 < l2 <= {qs.width}")
    if l2 <= qs.lcp:
        return 1.0
    e, n_gate, not_left, not_right = _two_level_terms(qs, l1, l2)
    x = _neg(p2, float(2 ** (l2 - l1)))
    if form == "verbatim":
        p_left = (p1 if not_left else 1.0) * e.i0 * _neg(p2, e.l_size)
        p_right = (p1 if not_right else 1.0) * e.i1 * _neg(p2, e.r_size)
        value = 1.0 - p_left - p_right - binomial_gate_sum(n_gate, p1, x)
        return min(1.0, max(0.0, value))
    if form == "independent":
        neg = (1.0 - p1 + p1 * x) ** n_gate if n_gate else 1.0
        for present_gate, partial, size in ((e.i2, e.i0, e.l_size), (e.i3, e.i1, e.r_size)):
            if partial:
                q = 1.0 if present_gate else p1
                neg *= (1.0 - q) + q * _neg(p2, size)
        return min(1.0, max(0.0, 1.0 - neg))
    raise ValueError(f"unknown form {form!r}")


def chernoff_bound(n: int, delta: float, p_max: float) -> float:
    """Bound on the probability that a sampled FPR misses the true one by more than ``delta``."""
    if n < 1:
        raise ValueError("sample size must be positive")
    if not 0 < p_max <= 1:
        raise ValueError("p_max must lie in (0, 1]")
    if delta <= 0:
        return 1.0
    t = n * delta * delta
    return min(1.0, 2 * math.exp(-2 * t), math.exp(-t / (2 * p_max)) + math.exp(-t / (3 * p_max)))


def mc_oracle(qs: QueryStats, design: DesignPoint, p, trials: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Simulate the filter's probe logic with independent per-prefix collisions.

    ``p`` is the Bloom FP rate, or ``(p1, p2)`` for the two-level family.
    Prefixes that are genuinely key prefixes always answer positive; every
    other probed prefix collides with its filter's rate, independently.
    Returns the positive fraction and its standard error.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)

    def any_hit(n: int, prob: float, size: int | tuple = trials) -> np.ndarray:
        n = min(int(n), 1 << 62)
        return rng.binomial(n, prob, size=size) > 0

    if design.family in ("pbf1", "proteus") and design.l1 == 0:
        l = design.l2
        certain = qs.lcp >= l
        hits = np.ones(trials, bool) if certain else any_hit(qs.cover(l).count, p)
    elif design.family == "proteus":
        l1, l2 = design.l1, design.l2
        e = qs.endpoints(l1, l2) if l2 else None
        if l2 == 0:
            hits = np.full(trials, qs.lcp >= l1)
        elif qs.lcp >= l2:
            hits = np.ones(trials, bool)
        else:
            hits = np.zeros(trials, bool)
            if e.i2:
                hits |= any_hit(e.l_size, p)
            if e.i3:
                hits |= any_hit(e.r_size, p)
    else:
        l1, l2 = design.l1, design.l2
        p1, p2 = p
        if qs.lcp >= l2:
            hits = np.ones(trials, bool)
        else:
            e = qs.endpoints(l1, l2)
            n_gate = qs.cover(l1).count - e.i0 - e.i1
            d = l2 - l1
            hits = np.zeros(trials, bool)
            ends = [(e.i0, e.i2, e.l_size)] if e.single else [(e.i0, e.i2, e.l_size), (e.i1, e.i3, e.r_size)]
            for partial, present, size in ends:
                if partial:
                    gate = np.ones(trials, bool) if present else rng.random(trials) < p1
                    hits |= gate & any_hit(size, p2)
            if n_gate:
                # gated interior regions each expose 2**d prefixes at the long filter
                gated = rng.binomial(min(n_gate, 1 << 62), p1, size=trials)
                probes = np.minimum(gated.astype(np.float64) * 2.0 ** d, 2.0 ** 62).astype(np.int64)
                hits |= rng.binomial(probes, p2) > 0
    est = float(hits.mean())
    return est, math.sqrt(max(est * (1 - est), 1e-300) / trials)


# -- batch statistics ------------------------------------------------------------------

class _Split:
    """Exact-enough floating representation of non-negative integers for shift-and-ceil.

    ``x = mant * 2**exp + rest`` with ``mant < 2**53``; ``tz`` is the number of
    trailing zero bits of ``x``.  ``ceil(x / 2**s)`` is exact while the result
    stays below ``2**53``.
    """

    def __init__(self, values):
        if isinstance(values, np.ndarray) and values.dtype == np.uint64:
            bl = bit_length(values)
            self.exp = np.maximum(bl - 53, 0)
            self.mant = (values >> self.exp.astype(np.uint64)).astype(np.float64)
            self.tz = trailing_zeros(values, 64 * 64)
        else:
            vals = [int(v) for v in values]
            self.exp = np.array([max(v.bit_length() - 53, 0) for v in vals], dtype=np.int64)
            self.mant = np.array([float(v >> int(e)) for v, e in zip(vals, self.exp)], dtype=np.float64)
            self.tz = np.array([(v & -v).bit_length() - 1 if v else 1 << 30 for v in vals], dtype=np.int64)

    def ceil_shift(self, s: np.ndarray) -> np.ndarray:
        """``ceil(x / 2**s)`` broadcast as (values, shifts)."""
        s = np.asarray(s)
        with np.errstate(over="ignore"):
            q = np.floor(np.ldexp(self.mant[:, None], (self.exp[:, None] - s[None, :]).clip(-1100, 1100)))
        return q + (self.tz[:, None] < s[None, :])


def _low_bits(values, shifts: np.ndarray, wide: bool):
    """``values mod 2**shifts`` (element-wise shifts, all below 64 for narrow keys)."""
    if not wide:
        return values & ((np.uint64(1) << shifts.astype(np.uint64)) - np.uint64(1))
    return np.array([int(v) & ((1 << int(s)) - 1) for v, s in zip(values, shifts)], dtype=object)


def _span_left(left, shift: np.ndarray, wide: bool):
    """Values from ``left`` to the end of its ``2**shift``-aligned block."""
    if not wide:
        return (np.uint64(1) << shift.astype(np.uint64)) - _low_bits(left, shift, wide)
    return np.array([(1 << int(s)) - (int(v) & ((1 << int(s)) - 1)) for v, s in zip(left, shift)], dtype=object)


def _span_right(right, shift: np.ndarray, wide: bool):
    """Values from the start of ``right``'s ``2**shift``-aligned block to ``right``."""
    if not wide:
        return _low_bits(right, shift, wide) + np.uint64(1)
    return np.array([(int(v) & ((1 << int(s)) - 1)) + 1 for v, s in zip(right, shift)], dtype=object)


@dataclass
class QueryBins:
    """Queries of one design grouped by outcome.

    ``counts[0]``: resolved by the trie (certain negative).
    ``counts[i]``, ``sums[i]`` for ``i >= 1``: queries with probe count in
    ``[2**(i-1), 2**i)`` and the total of their probe counts.
    ``certain``: queries that always answer positive.
    """

    counts: np.ndarray
    sums: np.ndarray
    certain: int
    total: int

    @property
    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), 0.0)

    def fpr(self, p: float) -> float:
        """Expected FPR for Bloom FP rate ``p``, one batch evaluation per bin."""
        return float(_binned_fpr(self.counts[None, :], self.sums[None, :], self.certain, self.total, np.array([p]))[0])


def _binned_fpr(counts: np.ndarray, sums: np.ndarray, certain, total: int, p: np.ndarray) -> np.ndarray:
    """Mean FPR per row given per-bin counts/sums (rows = designs) and per-row ``p``."""
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        logq = np.log1p(-np.minimum(p, 1.0))[:, None]
        per_bin = np.where(counts > 0, counts * -np.expm1(means * logq), 0.0)
    per_bin[:, 0] = 0.0
    # bins summed in ascending order for bit-reproducible totals
    acc = np.zeros(per_bin.shape[0])
    for b in range(per_bin.shape[1]):
        acc = acc + per_bin[:, b]
    return (acc + certain) / total


@dataclass
class ModelVerdict:
    chosen: DesignPoint
    expected_fpr: float
    per_design: dict = field(default_factory=dict)


class SampleModel:
    """Budget-independent statistics of a key set and an empty-query sample.

    ``coarse`` thins the Bloom prefix lengths considered to that many uniformly
    spaced candidates (useful for wide string keys).
    """

    def __init__(self, keys: SortedKeys, left, right, *, coarse: int | None = None, check_empty: bool = True):
        if not len(keys):
            raise ProteusError("empty key set")
        self.keys = keys
        self.width = k = keys.width
        self.wide = k > 64
        if self.wide:
            self.left = np.array([int(v) for v in left], dtype=object)
            self.right = np.array([int(v) for v in right], dtype=object)
        else:
            self.left = np.asarray(left, dtype=np.uint64)
            self.right = np.asarray(right, dtype=np.uint64)
        self.n = len(self.left)
        if self.n == 0:
            raise ProteusError("the model needs at least one sample query")
        if np.any(self.left > self.right):
            raise ValueError("sample query with left > right")
        self.counts = count_key_prefixes(keys)
        self.trie_bits = trie_mem_table(self.counts)
        self._stats(check_empty)
        if coarse and coarse < k:
            cand = np.unique(np.round(np.linspace(1, k, coarse)).astype(np.int64))
        else:
            cand = np.arange(1, k + 1)
        self.l2_candidates = cand
        self.nbins = min(k, 1000) + 2
        self._bins: dict[int, tuple] = {}

    # -- extraction ----------------------------------------------------------------
    def _stats(self, check_empty: bool) -> None:
        k, keys = self.width, self.keys
        if self.wide:
            vals = keys.values
            lo = np.array([bisect.bisect_left(vals, int(v)) for v in self.left], dtype=np.int64)
            hi = np.array([bisect.bisect_right(vals, int(v)) for v in self.right], dtype=np.int64)
        else:
            lo = np.searchsorted(keys.array, self.left, side="left")
            hi = np.searchsorted(keys.array, self.right, side="right")
        if check_empty and np.any(hi > lo):
            raise ProteusError(f"{int(np.sum(hi > lo))} sample queries are not empty")
        arr = keys.array
        has_pred, has_succ = lo > 0, lo < len(keys)
        pred = arr[np.maximum(lo - 1, 0)]
        succ = arr[np.minimum(lo, len(keys) - 1)]

        def shared(a, b, ok):
            return np.where(ok, lcp_array(a, b, k), 0)

        lp, rs = shared(pred, self.left, has_pred), shared(succ, self.right, has_succ)
        self.lam = np.maximum(lp, rs)
        self.a = np.maximum(lp, shared(succ, self.left, has_succ))
        self.b = np.maximum(rs, shared(pred, self.right, has_pred))
        self.c = lcp_array(self.left, self.right, k)
        # the halves where left and right diverge; unused when left == right
        j = np.minimum(self.c + 1, k)
        self.split_l = _Split(_span_left(self.left, k - j, self.wide))
        self.split_r = _Split(_span_right(self.right, k - j, self.wide))
        self.tz_left = trailing_zeros(self.left, k)
        ones = ~self.right if not self.wide else np.array([((1 << k) - 1) ^ int(v) for v in self.right], dtype=object)
        self.to_right = trailing_zeros(ones, k)

    def stats(self, i: int) -> QueryStats:
        return QueryStats(int(self.left[i]), int(self.right[i]), self.width, int(self.lam[i]), int(self.a[i]), int(self.b[i]))

    def q_counts(self, lengths: np.ndarray, rows=slice(None)) -> np.ndarray:
        """``|Q_l|`` per (query, length)."""
        s = self.width - np.asarray(lengths)
        c = self.c[rows][:, None]
        both = _sub(self.split_l, rows).ceil_shift(s) + _sub(self.split_r, rows).ceil_shift(s)
        return np.where(np.asarray(lengths)[None, :] <= c, 1.0, both)

    def regions(self, l1: int, l2s: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Bloom probes ``I2|L| + I3|R|`` per (query in ``rows``, ``l2``) for a trie at ``l1``."""
        k = self.width
        s = k - np.asarray(l2s)
        single = (l1 <= self.c[rows])
        out = np.empty((len(rows), len(s)))
        if single.any():
            out[single] = self.q_counts(l2s, rows[single])
        multi = rows[~single]
        if multi.size:
            shift = np.full(multi.size, k - l1)
            left_span = _Split(_span_left(self.left[multi], shift, self.wide)).ceil_shift(s)
            right_span = _Split(_span_right(self.right[multi], shift, self.wide)).ceil_shift(s)
            i2 = (self.a[multi] >= l1)[:, None]
            i3 = (self.b[multi] >= l1)[:, None]
            out[~single] = np.where(i2, left_span, 0.0) + np.where(i3, right_span, 0.0)
        return np.minimum(out, REGION_CAP)

    # -- binning -------------------------------------------------------------------
    def bins(self, l1: int):
        """Per-``l2`` bins for a trie at ``l1``: ``(counts, sums, certain, resolved)``.

        Rows follow :attr:`l2_candidates`; rows with ``l2 <= l1`` stay empty.
        """
        cached = self._bins.get(l1)
        if cached is not None:
            return cached
        cand = self.l2_candidates
        n_l2 = len(cand)
        counts = np.zeros((n_l2, self.nbins))
        sums = np.zeros((n_l2, self.nbins))
        reached = np.flatnonzero(self.lam >= l1)
        resolved = self.n - reached.size
        counts[:, 0] = resolved
        certain = np.array([(self.lam[reached] >= l2).sum() for l2 in cand], dtype=np.float64)
        cols = np.flatnonzero(cand > l1)
        if reached.size and cols.size:
            for start in range(0, reached.size, 4096):
                rows = reached[start:start + 4096]
                nr = self.regions(l1, cand[cols], rows)
                live = self.lam[rows][:, None] < cand[cols][None, :]
                b = np.frexp(nr)[1]
                col_idx = np.broadcast_to(np.arange(cols.size)[None, :], nr.shape)
                flat = (cols[col_idx] * self.nbins + b)[live]
                counts += np.bincount(flat, minlength=n_l2 * self.nbins).reshape(n_l2, self.nbins)
                sums += np.bincount(flat, weights=nr[live], minlength=n_l2 * self.nbins).reshape(n_l2, self.nbins)
        result = (counts, sums, certain, resolved)
        self._bins[l1] = result
        return result

    def query_bins(self, l1: int, l2: int) -> QueryBins:
        counts, sums, certain, _ = self.bins(l1)
        row = self._row(l2)
        return QueryBins(counts[row].copy(), sums[row].copy(), int(certain[row]), self.n)

    def _row(self, l2: int) -> int:
        row = int(np.searchsorted(self.l2_candidates, l2))
        if row >= len(self.l2_candidates) or self.l2_candidates[row] != l2:
            raise InvalidDesignError(f"l2={l2} is not a candidate length")
        return row

    # -- evaluation ------------------------------------------------------------------
    def proteus_curve(self, l1: int, budget: int) -> np.ndarray:
        """Binned expected FPR for every candidate ``l2`` (NaN where ``l2 <= l1``)."""
        counts, sums, certain, _ = self.bins(l1)
        cand = self.l2_candidates
        p = plan_fpr(budget - self.trie_bits[l1], self.counts[cand].astype(np.float64))
        out = _binned_fpr(counts, sums, certain, self.n, p)
        out[cand <= l1] = np.nan
        return out

    def trie_only_fpr(self, l1: int) -> float:
        return float((self.lam >= l1).sum()) / self.n

    def exact_fpr(self, design: DesignPoint, pbf2_form: str = "verbatim") -> float:
        """Unbinned mean of the per-query closed forms (reference for the binned path)."""
        if design.family == "pbf2":
            mat = self.pbf2_matrix(design.l1, design.split, design.budget, pbf2_form)
            return float(np.mean(mat[:, self._row(design.l2)]))
        l1, l2 = design.l1, design.l2
        if l2 == 0:
            return self.trie_only_fpr(l1)
        p = plan_fpr(design.budget - self.trie_bits[l1], float(self.counts[l2]))
        per = np.zeros(self.n)
        reached = np.flatnonzero(self.lam >= l1)
        nr = self.regions(l1, np.array([l2]), reached)[:, 0]
        certain = self.lam[reached] >= l2
        with np.errstate(invalid="ignore", divide="ignore"):
            val = -np.expm1(nr * np.log1p(-min(float(p), 1.0)))
        per[reached] = np.where(certain, 1.0, val)
        return float(per.mean())

    def fpr(self, design: DesignPoint, pbf2_form: str = "verbatim") -> float:
        """Model FPR of one design (binned for single-level and hybrid families)."""
        if design.family == "pbf2":
            return self.exact_fpr(design, pbf2_form)
        if design.l2 == 0:
            return self.trie_only_fpr(design.l1)
        p = float(plan_fpr(design.budget - int(self.trie_bits[design.l1]), float(self.counts[design.l2])))
        return self.query_bins(design.l1, design.l2).fpr(p)

    def pbf2_matrix(self, l1: int, split: float, budget: int, form: str = "verbatim") -> np.ndarray:
        """Per-query two-level FPR, shape (queries, l2 candidates); NaN where ``l2 <= l1``."""
        k = self.width
        cand = self.l2_candidates
        m1 = math.ceil(split * budget)
        p1 = plan_fpr(m1, float(self.counts[l1]))
        p2 = plan_fpr(budget - m1, self.counts[cand].astype(np.float64))[None, :]
        t = k - l1
        single = (l1 <= self.c)[:, None]
        i0 = np.where(single[:, 0], (self.tz_left < t) | (self.to_right < t), self.tz_left < t)[:, None]
        i1 = np.where(single[:, 0], False, self.to_right < t)[:, None]
        q1 = self.q_counts(np.array([l1]))
        n_gate = q1 - i0 - i1
        shift = np.full(self.n, t)
        s = k - cand
        ls = np.where(single, self.q_counts(cand), _Split(_span_left(self.left, shift, self.wide)).ceil_shift(s))
        rs = np.where(single, 0.0, _Split(_span_right(self.right, shift, self.wide)).ceil_shift(s))
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            lq2 = np.log1p(-np.minimum(p2, 1.0))
            neg_l = np.where(ls > 0, np.exp(ls * lq2), 1.0)
            neg_r = np.where(rs > 0, np.exp(rs * lq2), 1.0)
            x = np.exp(np.ldexp(1.0, np.minimum(cand - l1, 1100))[None, :] * lq2)
            x = np.where(p2 > 0, x, 1.0)
            gate_neg = np.where(n_gate > 0, np.power(1.0 - p1 + p1 * x, n_gate), 1.0)
            present_l = (self.a >= l1)[:, None]
            present_r = (self.b >= l1)[:, None]
            if form == "verbatim":
                not_l = np.where(single, True, ~present_l)
                not_r = np.where(single, False, ~present_r)
                p_left = np.where(not_l, p1, 1.0) * i0 * neg_l
                p_right = np.where(not_r, p1, 1.0) * i1 * neg_r
                val = np.clip(1.0 - p_left - p_right - gate_neg, 0.0, 1.0)
            else:
                ql = np.where(present_l, 1.0, p1)
                qr = np.where(present_r & ~single, 1.0, p1)
                a_l = np.where(i0, (1.0 - ql) + ql * neg_l, 1.0)
                a_r = np.where(i1, (1.0 - qr) + qr * neg_r, 1.0)
                val = np.clip(1.0 - a_l * a_r * gate_neg, 0.0, 1.0)
        val = np.where(self.lam[:, None] >= cand[None, :], 1.0, val)
        val[:, cand <= l1] = np.nan
        return val

    # -- selection -----------------------------------------------------------------
    def feasible_depths(self, budget: int) -> np.ndarray:
        return np.flatnonzero(self.trie_bits <= budget)

    def select(self, budget: int, family: str = "proteus", strict: bool = False,
               pbf2_form: str = "verbatim") -> ModelVerdict:
        """Design with the lowest expected FPR under ``budget``.

        Designs are enumerated by ascending ``l1`` (the trie-only design first,
        then ascending ``l2``).  Among equal FPRs the last enumerated design
        wins, or the first one when ``strict``.  ``pbf2_form`` picks the
        two-level formula (see :func:`fpr_2pbf`).
        """
        if budget <= 0:
            raise InfeasibleDesignError("budget must be positive")
        designs: list[DesignPoint] = []
        values: list[float] = []
        cand = self.l2_candidates
        if family in ("proteus", "pbf1"):
            depths = [0] if family == "pbf1" else self.feasible_depths(budget)
            for l1 in depths:
                l1 = int(l1)
                if l1:
                    designs.append(DesignPoint.proteus(l1, 0, budget))
                    values.append(self.trie_only_fpr(l1))
                curve = self.proteus_curve(l1, budget)
                for idx in np.flatnonzero(cand > l1):
                    l2 = int(cand[idx])
                    d = DesignPoint.pbf1(l2, budget) if family == "pbf1" else DesignPoint.proteus(l1, l2, budget)
                    designs.append(d)
                    values.append(float(curve[idx]))
        elif family == "pbf2":
            for l1 in range(1, self.width):
                for split in SPLITS:
                    cols = np.flatnonzero(cand > l1)
                    if not cols.size:
                        continue
                    means = self.pbf2_matrix(l1, split, budget, pbf2_form).mean(axis=0)
                    for idx in cols:
                        designs.append(DesignPoint.pbf2(l1, int(cand[idx]), split, budget))
                        values.append(float(means[idx]))
        else:
            raise InvalidDesignError(f"unknown family {family!r}")
        if not designs:
            raise InfeasibleDesignError("no feasible design")
        vals = np.asarray(values)
        best = vals.min()
        ties = np.flatnonzero(vals == best)
        pick = int(ties[0] if strict else ties[-1])
        return ModelVerdict(designs[pick], float(best), dict(zip(designs, values)))


def _sub(split: _Split, rows) -> _Split:
    out = _Split.__new__(_Split)
    out.mant, out.exp, out.tz = split.mant[rows], split.exp[rows], split.tz[rows]
    return out


def _sample_bounds(sample) -> tuple[list[int], list[int]]:
    if isinstance(sample, tuple) and len(sample) == 2:
        return sample
    return [q.left for q in sample], [q.right for q in sample]


def bin_queries(model: SampleModel, design: DesignPoint) -> QueryBins:
    """Bins of the model's sample for one trie-gated or single-filter design."""
    if design.family == "pbf2":
        raise InvalidDesignError("two-level designs are evaluated per query, not binned")
    if design.l2 == 0:
        resolved = int((model.lam < design.l1).sum())
        counts = np.zeros(model.nbins)
        counts[0] = resolved
        return QueryBins(counts, np.zeros(model.nbins), model.n - resolved, model.n)
    return model.query_bins(design.l1, design.l2)


def select_design(keys: SortedKeys, sample, budget: int, family: str = "proteus", *,
                  strict: bool = False, coarse: int | None = None, pbf2_form: str = "verbatim") -> ModelVerdict:
    """Pick the design of ``family`` with the lowest expected FPR on ``sample``.

    ``sample`` is a sequence of empty :class:`RangeQuery` or a ``(lefts, rights)`` pair.
    """
    left, right = _sample_bounds(sample)
    return SampleModel(keys, left, right, coarse=coarse).select(budget, family, strict, pbf2_form)
