"""LSM-lite: range-partitioned segments with per-segment filters and a sample queue.

The store splits the 64-bit key space at key quantiles into a fixed number of
segments.  Each segment owns a sorted key run and one filter whose design is
chosen from the sample queue.  Puts land in an exact memtable; a compaction
merges the memtable into the segments it touches and rebuilds just those
filters.  A query probes every segment its range overlaps, clipped to the
segment's bounds.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..cpfpr import SampleModel
from ..errors import InvariantViolation
from ..filters import DEFAULT_MAX_PROBES, DesignPoint, RangeFilter, build_filter
from ..keyspace import SortedKeys
from ..workloads import WorkloadSpec, draw_keys, draw_queries, label_empty

TOP = (1 << 64) - 1


class QueryQueue:
    """Fixed-capacity FIFO of empty queries; admits every ``sample_every``-th offer."""

    def __init__(self, capacity: int = 20_000, sample_every: int = 100):
        if capacity < 1 or sample_every < 1:
            raise ValueError("queue capacity and sampling period must be positive")
        self.capacity = capacity
        self.sample_every = sample_every
        self._left: deque[int] = deque(maxlen=capacity)
        self._right: deque[int] = deque(maxlen=capacity)
        self._seen = 0

    def __len__(self) -> int:
        return len(self._left)

    def seed(self, left, right) -> None:
        """Fill directly (the initial sample), bypassing the sampling period."""
        self._left.extend(int(v) for v in left)
        self._right.extend(int(v) for v in right)

    def offer(self, left, right) -> None:
        """Offer executed empty queries in order; keeps every ``sample_every``-th."""
        left, right = np.asarray(left), np.asarray(right)
        n = len(left)
        # positions i with (seen + i + 1) % period == 0
        first = (-self._seen - 1) % self.sample_every
        take = np.arange(first, n, self.sample_every)
        self.seed(left[take], right[take])
        self._seen += n

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.fromiter(self._left, np.uint64, len(self)), np.fromiter(self._right, np.uint64, len(self))


@dataclass
class Segment:
    lo: int
    hi: int
    keys: np.ndarray
    filter: RangeFilter | None = None
    design: DesignPoint | None = None
    dirty: bool = False

    def overlaps(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        return (left <= np.uint64(self.hi)) & (right >= np.uint64(self.lo))

    def clip(self, left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.maximum(left, np.uint64(self.lo)), np.minimum(right, np.uint64(self.hi))


@dataclass
class RebuildStats:
    rebuilt: int = 0
    model_ms: float = 0.0
    build_ms: float = 0.0
    designs: list = field(default_factory=list)


class SegmentedStore:
    """Range-partitioned key store with one range filter per segment."""

    def __init__(self, keys: np.ndarray, n_segments: int = 16, bpk: float = 10.0, family: str = "proteus",
                 seed: int = 0, max_probes: int = DEFAULT_MAX_PROBES):
        keys = np.unique(np.asarray(keys, dtype=np.uint64))
        if keys.size < n_segments:
            raise ValueError("fewer keys than segments")
        self.bpk = bpk
        self.family = family
        self.seed = seed
        self.max_probes = max_probes
        cuts = [int(keys[(i * keys.size) // n_segments]) for i in range(1, n_segments)]
        bounds = [0, *cuts, TOP + 1]
        self.bounds = np.array(cuts, dtype=np.uint64)
        self.segments = []
        for i in range(n_segments):
            lo, hi = bounds[i], bounds[i + 1] - 1
            sel = keys[(keys >= np.uint64(lo)) & (keys <= np.uint64(hi))]
            self.segments.append(Segment(lo, hi, sel, dirty=True))
        self.memtable = np.zeros(0, dtype=np.uint64)
        self._builds = 0

    # -- contents -----------------------------------------------------------------
    def all_keys(self) -> np.ndarray:
        return np.union1d(np.concatenate([s.keys for s in self.segments]), self.memtable)

    def put_many(self, keys) -> None:
        self.memtable = np.union1d(self.memtable, np.asarray(keys, dtype=np.uint64))

    def compact(self) -> None:
        """Merge the memtable into its segments and mark them for rebuild."""
        if not self.memtable.size:
            return
        seg = np.searchsorted(self.bounds, self.memtable, side="right")
        for i in np.unique(seg):
            s = self.segments[int(i)]
            s.keys = np.union1d(s.keys, self.memtable[seg == i])
            s.dirty = True
        self.memtable = np.zeros(0, dtype=np.uint64)

    # -- filters ------------------------------------------------------------------
    def fallback(self, budget: int) -> DesignPoint:
        """Design used when no sample query touches a segment."""
        if self.family == "pbf2":
            return DesignPoint.pbf2(32, 64, 0.5, budget)
        if self.family == "pbf1":
            return DesignPoint.pbf1(64, budget)
        return DesignPoint.proteus(0, 64, budget)

    def rebuild(self, queue: QueryQueue, only_dirty: bool = True) -> RebuildStats:
        """Rebuild segment filters from the queue; by default only segments with new keys."""
        stats = RebuildStats()
        q_left, q_right = queue.arrays()
        for s in self.segments:
            if only_dirty and not s.dirty:
                continue
            budget = max(1, int(self.bpk * s.keys.size))
            t0 = time.perf_counter()
            hit = s.overlaps(q_left, q_right)
            cl, cr = s.clip(q_left[hit], q_right[hit])
            sk = SortedKeys.from_array(s.keys, 64)
            ok = label_empty(sk, cl, cr)
            if ok.any():
                design = SampleModel(sk, cl[ok], cr[ok]).select(budget, self.family).chosen
            else:
                design = self.fallback(budget)
            t1 = time.perf_counter()
            s.filter = build_filter(sk, design, seed=self.seed + self._builds, max_probes=self.max_probes)
            self._builds += 1
            stats.build_ms += 1e3 * (time.perf_counter() - t1)
            stats.model_ms += 1e3 * (t1 - t0)
            s.design, s.dirty = design, False
            stats.rebuilt += 1
            stats.designs.append(design)
        return stats

    # -- queries ------------------------------------------------------------------
    def query_batch(self, left, right) -> tuple[np.ndarray, np.ndarray]:
        """(positive, empty) per query; raises on a false negative."""
        left = np.asarray(left, dtype=np.uint64)
        right = np.asarray(right, dtype=np.uint64)
        positive = np.zeros(left.size, dtype=bool)
        for s in self.segments:
            idx = np.flatnonzero(s.overlaps(left, right))
            if not idx.size:
                continue
            cl, cr = s.clip(left[idx], right[idx])
            out = s.filter.query_batch(cl, cr)
            truth = np.searchsorted(s.keys, cr, side="right") > np.searchsorted(s.keys, cl, side="left")
            if np.any(truth & ~out.positive):
                raise InvariantViolation(f"segment [{s.lo:#x}, {s.hi:#x}] returned a false negative")
            positive[idx] |= out.positive
        mem = np.searchsorted(self.memtable, right, side="right") > np.searchsorted(self.memtable, left, side="left")
        empty = ~mem & ~self._segment_hits(left, right)
        return positive | mem, empty

    def _segment_hits(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        hit = np.zeros(left.size, dtype=bool)
        for s in self.segments:
            hit |= np.searchsorted(s.keys, right, side="right") > np.searchsorted(s.keys, left, side="left")
        return hit


# -- shifting workloads -----------------------------------------------------------------

@dataclass(frozen=True)
class ShiftConfig:
    start_kind: str = "uniform"
    end_kind: str = "correlated"
    mode: str = "gradual"
    batches: int = 10
    n_queries: int = 100_000
    segments: int = 16
    rebuild_period: int = 10_000
    queue_size: int = 20_000
    sample_every: int = 100
    put_ratio: float = 2 / 3
    bpk: float = 10.0
    family: str = "proteus"
    max_probes: int = 1 << 16

    def __post_init__(self) -> None:
        if self.mode not in ("gradual", "extreme"):
            raise ValueError(f"unknown shift mode {self.mode!r}")
        if self.batches < 1 or self.n_queries < self.batches:
            raise ValueError("need at least one query per batch")
        if self.rebuild_period < 0:
            raise ValueError("rebuild period must be non-negative")


@dataclass
class BatchResult:
    batch: int
    ratio: float
    observed_fpr: float
    n_empty: int
    rebuilds: int
    model_ms: float
    build_ms: float


def _end_mask(cfg: ShiftConfig, start: int, n: int, rng: np.random.Generator) -> np.ndarray:
    pos = np.arange(start, start + n)
    if cfg.mode == "extreme":
        return pos >= cfg.n_queries // 2
    return rng.random(n) < pos / max(cfg.n_queries - 1, 1)


def run_shift(spec: WorkloadSpec, cfg: ShiftConfig, *, steady: bool = False) -> list[BatchResult]:
    """Execute a shifting workload over LSM-lite and report per-batch FPR.

    ``spec`` gives the key distribution, initial key count, range parameters,
    seed and the initial sample size.  With ``steady`` the run is a baseline:
    every query comes from the end distribution and the queue is seeded from it.
    """
    from ..workloads import gen_keys, sample_empty

    keys = gen_keys(spec)
    store = SegmentedStore(keys.array, cfg.segments, cfg.bpk, cfg.family, spec.seed, cfg.max_probes)
    queue = QueryQueue(cfg.queue_size, cfg.sample_every)
    seed_kind = cfg.end_kind if steady else cfg.start_kind
    init = sample_empty(spec, keys, min(spec.n_sample, cfg.queue_size), kind=seed_kind)
    queue.seed(init.left, init.right)
    first = store.rebuild(queue)
    rng_q, rng_mix, rng_put = spec.rng(11), spec.rng(12), spec.rng(13)
    batch_len = cfg.n_queries // cfg.batches
    period = cfg.rebuild_period or cfg.n_queries
    results = []
    pending = BatchResult(0, 0.0, 0.0, 0, first.rebuilt, first.model_ms, first.build_ms)
    pos_acc = emp_acc = 0
    done = 0
    while done < cfg.n_queries:
        stop = min(cfg.n_queries, (done // period + 1) * period, (done // batch_len + 1) * batch_len)
        n = stop - done
        current = SortedKeys.from_array(store.all_keys(), 64)
        if steady:
            is_end = np.ones(n, dtype=bool)
        else:
            is_end = _end_mask(cfg, done, n, rng_mix)
        sl, sr = draw_queries(spec, current, rng_q, n, cfg.start_kind)
        el, er = draw_queries(spec, current, rng_q, n, cfg.end_kind)
        left, right = np.where(is_end, el, sl), np.where(is_end, er, sr)
        store.put_many(draw_keys(spec.key_dist, rng_put, int(round(n * cfg.put_ratio))))
        positive, empty = store.query_batch(left, right)
        queue.offer(left[empty], right[empty])
        pos_acc += int(positive[empty].sum())
        emp_acc += int(empty.sum())
        done = stop
        if cfg.rebuild_period and done % period == 0 and done < cfg.n_queries:
            store.compact()
            st = store.rebuild(queue)
            pending.rebuilds += st.rebuilt
            pending.model_ms += st.model_ms
            pending.build_ms += st.build_ms
        if done % batch_len == 0 or done == cfg.n_queries:
            b = len(results)
            pending.batch = b
            pending.ratio = 1.0 if steady else _batch_ratio(cfg, b)
            pending.observed_fpr = pos_acc / emp_acc if emp_acc else 0.0
            pending.n_empty = emp_acc
            results.append(pending)
            pending = BatchResult(b + 1, 0.0, 0.0, 0, 0, 0.0, 0.0)
            pos_acc = emp_acc = 0
    return results[: cfg.batches]


def _batch_ratio(cfg: ShiftConfig, b: int) -> float:
    """Mean share of end-distribution queries in batch ``b``."""
    lo, hi = b / cfg.batches, (b + 1) / cfg.batches
    if cfg.mode == "extreme":
        return float(np.clip((hi - 0.5) / (hi - lo), 0.0, 1.0))
    return (lo + hi) / 2
