"""Uniform-depth succinct binary trie over the unique ``l1``-bit key prefixes.

Levels above ``cutoff`` use a dense encoding (per node: 2-bit label bitmap and
2-bit has-child bitmap); the remaining levels use a sparse encoding (per edge:
label bit, has-child bit, LOUDS bit).  As soon as a branch holds a single
prefix, the edge is terminal and the missing low bits are kept verbatim in a
suffix store, grouped by depth in level order.

The cost constants below are shared with the estimator used by the model, so
the estimate is an upper bound of :attr:`UniformTrie.size_bits` by
construction: every stored suffix bit replaces a node (4 bits) or an edge
(3 bits) that the estimate still counts.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .bitops import RANK_BLOCK, RANK_ENTRY_BITS, BitVector, lcp_array
from .errors import InvalidDesignError, ProteusError
from .keyspace import PrefixCover

DENSE_BITS_PER_NODE = 4
SPARSE_BITS_PER_EDGE = 3
LEVEL_META_BITS = 96  # 32-bit terminal count + 64-bit suffix offset per level
HEADER_BITS = 256  # depth, cutoff, dense node count, dense has-child count


def _ranked(bits: int) -> int:
    return bits + RANK_ENTRY_BITS * (-(-bits // RANK_BLOCK))


def estimate_bits(depth: int, counts: Sequence[int], cutoff: int) -> int:
    """Size of a depth-``depth`` trie with ``cutoff`` dense levels, ignoring suffix savings.

    ``counts[d]`` is the number of unique ``d``-bit prefixes.
    """
    if depth == 0:
        return 0
    dense_nodes = sum(counts[d] for d in range(cutoff))
    sparse_edges = sum(counts[d + 1] for d in range(cutoff, depth))
    dense = 2 * _ranked(2 * dense_nodes)
    sparse = sparse_edges + 2 * _ranked(sparse_edges)
    return dense + sparse + LEVEL_META_BITS * depth + HEADER_BITS


def best_cutoff(depth: int, counts: Sequence[int]) -> tuple[int, int]:
    """Dense/sparse cutoff minimising :func:`estimate_bits`; ties favour fewer dense levels."""
    best_c, best = 0, estimate_bits(depth, counts, 0)
    for c in range(1, depth + 1):
        size = estimate_bits(depth, counts, c)
        if size < best:
            best_c, best = c, size
    return best_c, best


def prefix_level_counts(prefixes: np.ndarray, depth: int) -> list[int]:
    """``counts[d]`` = unique ``d``-bit prefixes of a sorted unique ``depth``-bit prefix array."""
    counts = np.ones(depth + 1, dtype=np.int64)
    if len(prefixes) > 1:
        l = lcp_array(prefixes[1:], prefixes[:-1], depth)
        hist = np.bincount(l, minlength=depth + 1)
        # an adjacent pair with lcp = j is distinguished at every level d > j
        counts[1:] += np.cumsum(hist)[:-1]
    return counts.tolist()


def _read_field(bits: np.ndarray, offset: int, length: int) -> int:
    if length == 0:
        return 0
    chunk = np.packbits(bits[offset:offset + length])
    return int.from_bytes(chunk.tobytes(), "big") >> ((-length) % 8)


class UniformTrie:
    """Exact set of ``depth``-bit prefixes with ordered range probing."""

    def __init__(self, prefixes: Sequence[int] | np.ndarray, depth: int, cutoff: int | None = None):
        if depth < 1:
            raise InvalidDesignError("trie depth must be at least 1")
        if depth <= 64:
            p = np.asarray(prefixes, dtype=np.uint64)
        else:
            p = np.empty(len(prefixes), dtype=object)
            p[:] = [int(v) for v in prefixes]
        if not len(p):
            raise ProteusError("cannot build a trie over zero prefixes")
        if len(p) > 1 and not np.all(p[1:] > p[:-1]):
            raise ValueError("prefixes must be sorted and unique")
        if int(p[-1]) >> depth:
            raise ValueError(f"prefix exceeds {depth} bits")
        self.depth = depth
        counts = prefix_level_counts(p, depth)
        self.level_counts = counts
        if cutoff is None:
            cutoff, _ = best_cutoff(depth, counts)
        self.cutoff = min(cutoff, depth)
        self._build(p)
        self._leaves: np.ndarray | None = None

    # -- construction ------------------------------------------------------------
    def _build(self, p: np.ndarray) -> None:
        depth, cutoff = self.depth, self.cutoff
        n = len(p)
        # depth at which each prefix becomes unique (its terminal edge is at uniq - 1)
        neigh = np.zeros(n, dtype=np.int64)
        if n > 1:
            l = lcp_array(p[1:], p[:-1], depth)
            neigh[1:] = l
            neigh[:-1] = np.maximum(neigh[:-1], l)
        uniq = neigh + 1

        d_labels, d_child, s_labels, s_child, s_louds = [], [], [], [], []
        suffix_parts: list[np.ndarray] = []
        term_before = np.zeros(depth, dtype=np.int64)
        suffix_base = np.zeros(depth, dtype=np.int64)
        n_term = n_suffix = 0
        self.dense_nodes = 0
        for d in range(depth):
            term_before[d], suffix_base[d] = n_term, n_suffix
            active = uniq >= d + 1
            if not active.any():
                continue
            members = p[active]
            shift = depth - d - 1
            edges = members >> shift if shift else members
            new_edge = np.ones(len(edges), dtype=bool)
            new_edge[1:] = edges[1:] != edges[:-1]
            starts = np.flatnonzero(new_edge)
            sizes = np.diff(np.append(starts, len(edges)))
            evals = edges[starts]
            child = sizes >= 2
            labels = (evals & 1).astype(bool)
            parents = evals >> 1
            first_of_node = np.ones(len(evals), dtype=bool)
            first_of_node[1:] = parents[1:] != parents[:-1]
            if d < cutoff:
                node_idx = np.cumsum(first_of_node) - 1
                n_nodes = int(node_idx[-1]) + 1
                lab = np.zeros(2 * n_nodes, dtype=bool)
                hc = np.zeros(2 * n_nodes, dtype=bool)
                slot = 2 * node_idx + labels
                lab[slot] = True
                hc[slot[child]] = True
                d_labels.append(lab)
                d_child.append(hc)
                self.dense_nodes += n_nodes
            else:
                s_labels.append(labels)
                s_child.append(child)
                s_louds.append(first_of_node)
            term = ~child
            if shift:
                mask = (1 << shift) - 1
                sfx = members[starts[term]] & (np.uint64(mask) if members.dtype != object else mask)
                width_bits = _to_bits(sfx, shift)
                suffix_parts.append(width_bits)
                n_suffix += width_bits.size
            n_term += int(term.sum())

        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=bool)  # noqa: E731
        self.d_labels = BitVector(cat(d_labels))
        self.d_child = BitVector(cat(d_child))
        self.s_labels = BitVector(cat(s_labels), rank=False)
        self.s_child = BitVector(cat(s_child))
        self.s_louds = BitVector(cat(s_louds))
        self.suffixes = cat(suffix_parts)
        self.term_before = term_before
        self.suffix_base = suffix_base
        self.dense_child_total = self.d_child.ones
        self.n_prefixes = n

    # -- accounting -------------------------------------------------------------
    @property
    def size_bits(self) -> int:
        """Exact footprint: bitmaps, rank directories, suffixes and per-level metadata."""
        return (
            self.d_labels.size_bits
            + self.d_child.size_bits
            + self.s_labels.size_bits
            + self.s_child.size_bits
            + self.s_louds.size_bits
            + int(self.suffixes.size)
            + LEVEL_META_BITS * self.depth
            + HEADER_BITS
        )

    def __len__(self) -> int:
        return self.n_prefixes

    # -- navigation -------------------------------------------------------------
    def _edges(self, d: int, node: int) -> list[tuple[int, int, bool, int]]:
        """``(label, position, has_child, child_id)`` for each edge of a node, label-ascending."""
        out = []
        if d < self.cutoff:
            for b in (0, 1):
                pos = 2 * node + b
                if self.d_labels.get(pos):
                    hc = bool(self.d_child.get(pos))
                    out.append((b, pos, hc, self.d_child.rank1(pos) if hc else -1))
            return out
        start = self.s_louds.select1(node - self.dense_nodes + 1)
        pos = start
        while pos < len(self.s_louds) and (pos == start or not self.s_louds.get(pos)):
            hc = bool(self.s_child.get(pos))
            child = self.dense_child_total + self.s_child.rank1(pos) if hc else -1
            out.append((self.s_labels.get(pos), pos, hc, child))
            pos += 1
        return out

    def _suffix(self, d: int, pos: int) -> int:
        length = self.depth - d - 1
        if d < self.cutoff:
            rank = self.d_labels.rank1(pos) - self.d_child.rank1(pos)
        else:
            rank = int(self.term_before[self.cutoff]) + (pos + 1 - self.s_child.rank1(pos))
        idx = rank - 1 - int(self.term_before[d])
        return _read_field(self.suffixes, int(self.suffix_base[d]) + idx * length, length)

    def range_probe(self, cover: PrefixCover) -> Iterator[int]:
        """Yield stored prefixes in ``[cover.first, cover.last]`` in ascending order."""
        if cover.length != self.depth:
            raise InvalidDesignError(f"cover at length {cover.length} probed against depth-{self.depth} trie")
        return self.probe(cover.first, cover.last)

    def probe(self, first: int, last: int) -> Iterator[int]:
        depth = self.depth
        # entries: (depth, node id, prefix value) for subtrees, (None, leaf) for resolved prefixes
        stack: list[tuple] = [(0, 0, 0)]
        while stack:
            d, *rest = stack.pop()
            if d is None:
                yield rest[0]
                continue
            node, value = rest
            shift = depth - d - 1
            ahead = []
            for b, pos, hc, child in self._edges(d, node):
                v = (value << 1) | b
                lo = v << shift
                if (lo | ((1 << shift) - 1)) < first or lo > last:
                    continue
                if hc:
                    ahead.append((d + 1, child, v))
                else:
                    leaf = lo | self._suffix(d, pos)
                    if first <= leaf <= last:
                        ahead.append((None, leaf))
            stack.extend(reversed(ahead))

    def __contains__(self, prefix: int) -> bool:
        return next(self.probe(prefix, prefix), None) is not None

    # -- bulk decode ------------------------------------------------------------
    def leaves(self) -> np.ndarray:
        """All stored prefixes, ascending, decoded level by level from the encoding."""
        if self._leaves is not None:
            return self._leaves
        depth = self.depth
        wide = depth > 64
        d_lab, d_hc = self.d_labels.to_bool(), self.d_child.to_bool()
        s_lab, s_hc, s_louds = self.s_labels.to_bool(), self.s_child.to_bool(), self.s_louds.to_bool()
        louds_ones = np.flatnonzero(s_louds)
        nodes = _values([0], wide)
        node_start = 0  # global id of the first node at this depth
        dense_seen = 0
        out = []
        for d in range(depth):
            if not len(nodes):
                break
            shift = depth - d - 1
            if d < self.cutoff:
                sl = slice(2 * node_start, 2 * (node_start + len(nodes)))
                lab, hc = d_lab[sl], d_hc[sl]
                node_of = np.arange(lab.size) // 2
                bit = np.arange(lab.size) % 2
                keep = lab
                evals = nodes[node_of[keep]] * 2 + _values(bit[keep], wide)
                hc = hc[keep]
                dense_seen += len(nodes)
            else:
                j0 = node_start - self.dense_nodes
                e0 = louds_ones[j0]
                e1 = louds_ones[j0 + len(nodes)] if j0 + len(nodes) < len(louds_ones) else s_louds.size
                node_of = np.cumsum(s_louds[e0:e1]) - 1
                evals = nodes[node_of] * 2 + _values(s_lab[e0:e1].astype(np.int64), wide)
                hc = s_hc[e0:e1]
            term = evals[~hc]
            if term.size:
                base, length = int(self.suffix_base[d]), shift
                sfx = _from_bits(self.suffixes[base:base + term.size * length], term.size, length, wide)
                out.append((term << _shift_const(shift, wide)) | sfx)
            node_start += len(nodes)
            nodes = evals[hc]
        leaves = np.concatenate(out) if out else _values([], wide)
        self._leaves = np.sort(leaves) if not wide else np.array(sorted(leaves), dtype=object)
        return self._leaves


def _values(vals, wide: bool) -> np.ndarray:
    if wide:
        arr = np.empty(len(vals), dtype=object)
        arr[:] = [int(v) for v in vals]
        return arr
    return np.asarray(vals, dtype=np.uint64)


def _shift_const(shift: int, wide: bool):
    return shift if wide else np.uint64(shift)


def _to_bits(values: np.ndarray, length: int) -> np.ndarray:
    """Big-endian ``length``-bit fields of each value, concatenated."""
    if values.dtype != object and length <= 64:
        shifts = np.arange(length - 1, -1, -1, dtype=np.uint64)
        return ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool).ravel()
    nbytes = (length + 7) // 8
    raw = b"".join(int(v).to_bytes(nbytes, "big") for v in values)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8)).reshape(len(values), nbytes * 8)
    return bits[:, nbytes * 8 - length:].astype(bool).ravel()


def _from_bits(bits: np.ndarray, count: int, length: int, wide: bool) -> np.ndarray:
    if length == 0:
        return _values([0] * count, wide)
    fields = bits.reshape(count, length)
    if not wide and length <= 64:
        weights = np.uint64(1) << np.arange(length - 1, -1, -1, dtype=np.uint64)
        return (fields.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    return _values([_read_field(fields[i], 0, length) for i in range(count)], wide)
