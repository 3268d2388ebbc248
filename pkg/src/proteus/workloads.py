"""Seeded key and query generators, dataset loaders and file formats.

Every generator is a pure function of its spec: the key set, the evaluation
queries and the sample queries come from independent random streams derived
from ``spec.seed``.  Queries are labelled empty or non-empty by binary search
over the keys; the sample stream keeps only empty queries.
"""

from __future__ import annotations

import bisect
import math
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidQueryError
from .keyspace import SortedKeys, pad

KEY_DISTS = ("uniform", "normal", "file")
QUERY_KINDS = ("uniform", "correlated", "split", "real", "point")
DEFAULT_CORR_DEGREE = 1 << 10
NORMAL_SIGMA_FRACTION = 0.01

# stream ids for independent sub-generators
_KEYS, _EVAL, _SAMPLE, _POOL = 0, 1, 2, 3


@dataclass(frozen=True)
class WorkloadSpec:
    key_dist: str = "uniform"
    query_kind: str = "uniform"
    n_keys: int = 100_000
    n_queries: int = 100_000
    n_sample: int = 20_000
    rmax: int = 1 << 8
    corr_degree: int = DEFAULT_CORR_DEGREE
    seed: int = 0
    width: int = 64
    # range bound of correlated queries, alone or in a split (defaults to rmax)
    rmax_correlated: int | None = None
    key_path: str | None = None

    def __post_init__(self) -> None:
        if self.key_dist not in KEY_DISTS:
            raise ValueError(f"unknown key distribution {self.key_dist!r}")
        if self.query_kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.query_kind!r}")
        if self.n_keys < 1:
            raise ValueError("need at least one key")
        if self.query_kind == "point":
            if self.rmax != 0:
                raise ValueError("point queries take rmax = 0")
        elif self.rmax < 2:
            raise ValueError("range workloads need rmax >= 2")
        if self.corr_degree < 1:
            raise ValueError("corr_degree must be at least 1")
        if self.key_dist == "file" and not self.key_path:
            raise ValueError("file keys need key_path")

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed & ((1 << 63) - 1), stream])


# -- random integers of arbitrary width ------------------------------------------------

def _uniform_below(rng: np.random.Generator, bound: int, n: int, width: int) -> np.ndarray:
    """``n`` integers uniform in ``[0, bound)``; ``uint64`` when ``width <= 64``."""
    if width <= 64:
        return rng.integers(0, bound, size=n, dtype=np.uint64)
    bits = bound.bit_length()
    limbs = (bits + 63) // 64
    out: list[int] = []
    while len(out) < n:
        raw = rng.integers(0, 1 << 64, size=(n - len(out), limbs), dtype=np.uint64).astype(">u8")
        for row in raw:
            v = int.from_bytes(row.tobytes(), "big") >> (64 * limbs - bits)
            if v < bound:
                out.append(v)
    arr = np.empty(n, dtype=object)
    arr[:] = out
    return arr


def _uniform_full(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    if width == 64:
        return rng.integers(0, (1 << 64) - 1, size=n, dtype=np.uint64, endpoint=True)
    if width < 64:
        return rng.integers(0, 1 << width, size=n, dtype=np.uint64)
    return _uniform_below(rng, 1 << width, n, width)


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normal deviates from pairs of uniforms."""
    u1 = 1.0 - rng.random(n)  # (0, 1]
    u2 = rng.random(n)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


def _normal64(rng: np.random.Generator, n: int) -> np.ndarray:
    """Rounded normal 64-bit values, mean 2**63, sd 0.01 * 2**64, clamped to the key space."""
    z = box_muller(rng, n)
    offset = z * (NORMAL_SIGMA_FRACTION * 2.0 ** 64)
    lim = 2.0 ** 63 - 1024
    offset = np.clip(np.round(offset), -lim, lim).astype(np.int64)
    return np.uint64(1 << 63) + offset.astype(np.uint64)


# -- keys ------------------------------------------------------------------------------

def gen_keys(spec: WorkloadSpec) -> SortedKeys:
    """``spec.n_keys`` distinct keys; duplicates are re-drawn until enough are unique."""
    if spec.key_dist == "file":
        values = load_sosd(spec.key_path)
        return SortedKeys.from_array(values, 64)
    if spec.width != 64:
        raise ValueError("integer key generators produce 64-bit keys; use gen_string_keys for other widths")
    rng = spec.rng(_KEYS)
    keys = np.unique(draw_keys(spec.key_dist, rng, spec.n_keys))
    while keys.size < spec.n_keys:
        keys = np.unique(np.concatenate([keys, draw_keys(spec.key_dist, rng, spec.n_keys - keys.size)]))
    return SortedKeys.from_array(keys, 64)


def draw_keys(key_dist: str, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` 64-bit keys (possibly repeated) from a named distribution."""
    if key_dist == "normal":
        return _normal64(rng, n)
    if key_dist == "uniform":
        return _uniform_full(rng, n, 64)
    raise ValueError(f"cannot draw fresh keys from {key_dist!r}")


def gen_string_keys(spec: WorkloadSpec, nbytes: int, min_bytes: int | None = None) -> SortedKeys:
    """Byte-string keys padded with trailing nulls to ``nbytes`` (width ``8 * nbytes``).

    Uniform keys are uniform bytes.  Normal keys take their leading 8 bytes from
    the 64-bit normal generator (so the leading byte centres on 128) and the
    rest uniformly.  With ``min_bytes`` each string gets a uniform length in
    ``[min_bytes, nbytes]`` before padding.
    """
    if nbytes < 1:
        raise ValueError("nbytes must be positive")
    rng = spec.rng(_KEYS)
    out: set[bytes] = set()
    while len(out) < spec.n_keys:
        need = spec.n_keys - len(out)
        raw = rng.integers(0, 256, size=(need, nbytes), dtype=np.uint8)
        if spec.key_dist == "normal":
            head = _normal64(rng, need).astype(">u8").view(np.uint8).reshape(need, 8)
            raw[:, : min(8, nbytes)] = head[:, : min(8, nbytes)]
        if min_bytes is not None:
            lengths = rng.integers(min_bytes, nbytes + 1, size=need)
        for i in range(need):
            s = raw[i].tobytes()
            if min_bytes is not None:
                s = s[: lengths[i]]
            out.add(pad(s, nbytes))
    return SortedKeys((int.from_bytes(s, "big") for s in out), 8 * nbytes)


def widen(keys: SortedKeys, extra_bytes: int) -> SortedKeys:
    """Append null bytes to every key: the string view of an integer key set."""
    shift = 8 * extra_bytes
    return SortedKeys((v << shift for v in keys.values), keys.width + shift, presorted=True)


# -- queries ---------------------------------------------------------------------------

@dataclass
class QuerySet:
    """Query bounds plus ground-truth emptiness labels."""

    left: np.ndarray
    right: np.ndarray
    empty: np.ndarray
    width: int

    def __len__(self) -> int:
        return len(self.left)

    def subset(self, mask) -> "QuerySet":
        return QuerySet(self.left[mask], self.right[mask], self.empty[mask], self.width)

    def pairs(self):
        return zip((int(v) for v in self.left), (int(v) for v in self.right))


def label_empty(keys: SortedKeys, left, right) -> np.ndarray:
    """True where ``[left, right]`` holds no key."""
    if keys.width <= 64:
        lo = np.searchsorted(keys.array, np.asarray(left, dtype=np.uint64), side="left")
        hi = np.searchsorted(keys.array, np.asarray(right, dtype=np.uint64), side="right")
        return hi == lo
    vals = keys.values
    return np.array([bisect.bisect_left(vals, int(a)) == bisect.bisect_right(vals, int(b)) for a, b in zip(left, right)], dtype=bool)


def _offsets(rng: np.random.Generator, n: int, rmax: int) -> np.ndarray:
    if rmax == 0:
        return np.zeros(n, dtype=np.uint64)
    return rng.integers(2, rmax, size=n, dtype=np.uint64, endpoint=True)


def _clip_add(base: np.ndarray, add: np.ndarray, top: int) -> np.ndarray:
    """``min(base + add, top)`` without wrapping."""
    if base.dtype == object:
        return np.array([min(int(b) + int(a), top) for b, a in zip(base, add)], dtype=object)
    room = np.uint64(top) - base
    return np.where(add > room, np.uint64(top), base + add)


def _draw(spec: WorkloadSpec, keys: SortedKeys, rng: np.random.Generator, n: int, kind: str,
          pool: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    width = keys.width
    top = (1 << width) - 1
    if kind == "split":
        coin = rng.random(n) < 0.5
        l1, r1 = _draw(spec, keys, rng, n, "correlated", pool)
        l2, r2 = _draw(spec, keys, rng, n, "uniform", pool)
        return np.where(coin, l1, l2), np.where(coin, r1, r2)
    rmax = spec.rmax_correlated if kind == "correlated" and spec.rmax_correlated else spec.rmax
    off = _offsets(rng, n, rmax)
    if kind in ("uniform", "point"):
        left = _uniform_below(rng, (1 << width) - rmax, n, width) if rmax else _uniform_full(rng, n, width)
    elif kind == "correlated":
        anchors = keys.array[rng.integers(0, len(keys), size=n)]
        step = rng.integers(1, spec.corr_degree, size=n, dtype=np.uint64, endpoint=True)
        left = _clip_add(anchors, step, top)
    elif kind == "real":
        if pool is None or not len(pool):
            raise ValueError("real queries need a pool of left bounds")
        left = np.asarray(pool)[rng.integers(0, len(pool), size=n)]
    else:
        raise ValueError(f"unknown query kind {kind!r}")
    if width > 64:
        left = np.array([int(v) for v in left], dtype=object)
        off = np.array([int(v) for v in off], dtype=object)
    return left, _clip_add(left, off, top)


def draw_queries(spec: WorkloadSpec, keys: SortedKeys, rng: np.random.Generator, n: int,
                 kind: str | None = None, pool: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Unlabelled query bounds of ``kind`` (default ``spec.query_kind``) from ``rng``."""
    return _draw(spec, keys, rng, n, kind or spec.query_kind, pool)


def gen_queries(spec: WorkloadSpec, keys: SortedKeys, pool: np.ndarray | None = None) -> tuple[QuerySet, QuerySet]:
    """Evaluation queries (labelled) and the empty-only sample, from independent streams."""
    ev_left, ev_right = _draw(spec, keys, spec.rng(_EVAL), spec.n_queries, spec.query_kind, pool)
    evaluation = QuerySet(ev_left, ev_right, label_empty(keys, ev_left, ev_right), keys.width)
    sample = sample_empty(spec, keys, spec.n_sample, pool)
    return evaluation, sample


def sample_empty(spec: WorkloadSpec, keys: SortedKeys, n: int, pool: np.ndarray | None = None,
                 kind: str | None = None, stream: int = _SAMPLE) -> QuerySet:
    """``n`` empty queries by rejection from the workload distribution."""
    rng = spec.rng(stream)
    kind = kind or spec.query_kind
    lefts, rights, have = [], [], 0
    attempts = 0
    while have < n:
        batch = max(1024, 2 * (n - have))
        a, b = _draw(spec, keys, rng, batch, kind, pool)
        ok = label_empty(keys, a, b)
        lefts.append(a[ok])
        rights.append(b[ok])
        have += int(ok.sum())
        attempts += 1
        if attempts > 1000:
            raise RuntimeError("could not draw enough empty queries; the workload is almost always non-empty")
    left = np.concatenate(lefts)[:n]
    right = np.concatenate(rights)[:n]
    return QuerySet(left, right, np.ones(n, dtype=bool), keys.width)


def real_pool(values: np.ndarray, n_keys: int, n_pool: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split a dataset into a key subsample and a disjoint pool of query left bounds."""
    values = np.unique(np.asarray(values, dtype=np.uint64))
    if n_keys + n_pool > values.size:
        raise ValueError(f"dataset has {values.size} distinct values, need {n_keys + n_pool}")
    rng = np.random.default_rng([seed, _POOL])
    pick = rng.choice(values.size, size=n_keys + n_pool, replace=False)
    return np.sort(values[pick[:n_keys]]), values[pick[n_keys:]]


# -- file formats ----------------------------------------------------------------------

def load_sosd(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-byte little-endian count followed by that many little-endian ``uint64``."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise FormatError(f"{path}: missing 8-byte count header")
        (count,) = struct.unpack("<Q", head)
        payload = fh.read()
    if len(payload) != 8 * count:
        raise FormatError(f"{path}: header says {count} values, payload holds {len(payload) / 8:g}")
    return np.frombuffer(payload, dtype="<u8").astype(np.uint64)


def write_sosd(path: str | os.PathLike, values: Sequence[int] | np.ndarray) -> None:
    arr = np.asarray(values, dtype=np.uint64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", arr.size))
        fh.write(arr.astype("<u8").tobytes())


def write_string_keys(path: str | os.PathLike, keys: SortedKeys) -> None:
    """One hex-encoded padded key per line."""
    nbytes = keys.width // 8
    with open(path, "w") as fh:
        for v in keys.values:
            fh.write(v.to_bytes(nbytes, "big").hex() + "\n")


def load_string_keys(path: str | os.PathLike, nbytes: int | None = None) -> SortedKeys:
    """Hex lines of (possibly unpadded) byte strings, padded to the longest or to ``nbytes``."""
    with open(path) as fh:
        try:
            raw = [bytes.fromhex(line.strip()) for line in fh if line.strip()]
        except ValueError as e:
            raise FormatError(f"{path}: {e}") from None
    target = nbytes or max(len(r) for r in raw)
    return SortedKeys((int.from_bytes(pad(r, target), "big") for r in raw), 8 * target)


def write_queries(path: str | os.PathLike, qs: QuerySet) -> None:
    """``left,right`` per line: decimal for 64-bit keys, hex bytes for wider ones."""
    nbytes = qs.width // 8
    with open(path, "w") as fh:
        for a, b in qs.pairs():
            if qs.width <= 64:
                fh.write(f"{a},{b}\n")
            else:
                fh.write(f"{a.to_bytes(nbytes, 'big').hex()},{b.to_bytes(nbytes, 'big').hex()}\n")


def load_queries(path: str | os.PathLike, keys: SortedKeys) -> QuerySet:
    """Parse a query file, clamp bounds into the key space and label emptiness."""
    width = keys.width
    top = (1 << width) - 1
    lefts, rights = [], []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                a, b = line.split(",")
                if width <= 64:
                    a, b = int(a), int(b)
                else:
                    nb = width // 8
                    a = int.from_bytes(pad(bytes.fromhex(a), nb), "big")
                    b = int.from_bytes(pad(bytes.fromhex(b), nb), "big")
            except ValueError as e:
                raise FormatError(f"{path}:{n}: {e}") from None
            if a > b:
                raise InvalidQueryError(f"{path}:{n}: left {a} > right {b}")
            lefts.append(min(max(a, 0), top))
            rights.append(min(max(b, 0), top))
    if width <= 64:
        left, right = np.array(lefts, dtype=np.uint64), np.array(rights, dtype=np.uint64)
    else:
        left, right = np.array(lefts, dtype=object), np.array(rights, dtype=object)
    return QuerySet(left, right, label_empty(keys, left, right), width)
