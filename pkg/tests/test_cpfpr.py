import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proteus.bloom import plan_fpr
from proteus.cpfpr import (
    QueryStats, SampleModel, binomial_gate_sum, chernoff_bound, count_key_prefixes, fpr_1pbf, fpr_2pbf,
    fpr_proteus, mc_oracle, query_stats, select_design, trie_mem, trie_mem_table,
)
from proteus.filters import DesignPoint
from proteus.keyspace import RangeQuery, SortedKeys


def test_count_key_prefixes_examples():
    assert count_key_prefixes(SortedKeys([0b0000, 0b0001, 0b1000], 4)).tolist() == [1, 2, 2, 2, 3]
    assert count_key_prefixes(SortedKeys([9], 4)).tolist() == [1] * 5
    assert count_key_prefixes(SortedKeys(range(16), 4)).tolist() == [1, 2, 4, 8, 16]


@given(st.lists(st.integers(0, (1 << 16) - 1), min_size=1, max_size=300))
def test_prefix_counts_and_trie_mem_properties(raw):
    keys = SortedKeys(raw, 16)
    counts = count_key_prefixes(keys)
    assert counts.tolist() == [len({v >> (16 - l) for v in keys}) for l in range(17)]
    table = trie_mem_table(counts)
    assert table[0] == 0 == trie_mem(0, counts)
    assert np.all(np.diff(table) >= 0)
    assert table.tolist() == [trie_mem(l, counts) for l in range(17)]


def stats(left, right, width, lcp):
    return QueryStats(left, right, width, lcp, lcp, lcp)


def test_prefix_bloom_closed_form():
    assert fpr_1pbf(stats(0, 31, 8, 5), 5, 0.01) == 1.0
    assert fpr_1pbf(stats(0b0100, 0b1000, 4, 0), 1, 0.0) == 0.0
    assert fpr_1pbf(stats(0b0100, 0b1000, 4, 0), 1, 0.5) == 0.75


TOY = SortedKeys([0x00A011, 0x020010, 0x0200F5, 0x031234], 24)


def test_hybrid_closed_form():
    assert fpr_proteus(stats(0, 15, 24, 3), 8, 12, 0.3) == 0.0
    red = query_stats(RangeQuery(0x020073, 0x02009C), TOY)
    assert red.n_regions(16, 20) == 3
    assert fpr_proteus(red, 16, 20, 0.1) == pytest.approx(0.271)
    assert fpr_proteus(red, 4, red.lcp, 0.1) == 1.0
    assert fpr_proteus(red, 16, 0, 0.1) == 1.0


def test_two_level_closed_form_edges():
    q = query_stats(RangeQuery(0x050000, 0x06FFFF), TOY)
    for form in ("verbatim", "independent"):
        assert fpr_2pbf(q, 8, 16, 0.0, 0.0, form) == 0.0
    near = query_stats(RangeQuery(0x020011, 0x020012), TOY)
    assert fpr_2pbf(near, 4, near.lcp, 0.2, 0.2) == 1.0


def test_binomial_gate_sum_matches_closed_form():
    rng = random.Random(5)
    for _ in range(30):
        n, p1, x = rng.randint(0, 5000), rng.random(), rng.random()
        assert binomial_gate_sum(n, p1, x) == pytest.approx((1 - p1 + p1 * x) ** n, abs=1e-9)
    big = binomial_gate_sum(1 << 30, 1e-9, 0.5)
    assert big == pytest.approx(math.exp((1 << 30) * math.log1p(-0.5e-9)), rel=1e-9)


def test_chernoff_bound():
    # min(2e^-2, e^-5 + e^(-10/3)) evaluated by hand
    assert chernoff_bound(10_000, 0.01, 0.1) == pytest.approx(0.04241194034634, rel=1e-12)
    assert chernoff_bound(20_000, 0.01, 0.1) == pytest.approx(0.00131803373110, rel=1e-11)
    assert chernoff_bound(10_000, 0.0, 0.1) == 1.0
    assert chernoff_bound(10 ** 7, 0.01, 0.1) < 1e-300


def test_oracle_degenerate_rates():
    q = query_stats(RangeQuery(0x050000, 0x0500FF), TOY)
    assert mc_oracle(q, DesignPoint.pbf1(20, 1), 0.0, 10_000)[0] == 0.0
    assert mc_oracle(q, DesignPoint.pbf1(20, 1), 1.0, 10_000)[0] == 1.0


def random_instance(rng, width=16, n_keys=30):
    keys = SortedKeys([rng.getrandbits(width) for _ in range(n_keys)], width)
    while True:
        a = rng.getrandbits(width)
        q = RangeQuery(a, min((1 << width) - 1, a + rng.getrandbits(rng.randint(1, 10))))
        if not keys.intersects(q):
            return keys, q


def test_closed_forms_track_oracle_small():
    rng = random.Random(11)
    misses = 0
    for t in range(20):
        keys, q = random_instance(rng)
        qs = query_stats(q, keys)
        p = rng.uniform(0.001, 0.3)
        l = rng.randint(1, 16)
        est, se = mc_oracle(qs, DesignPoint.pbf1(l, 1), p, 20_000, seed=t)
        misses += abs(est - fpr_1pbf(qs, l, p)) > 3 * se + 1e-12
        l1 = rng.randint(1, 15)
        l2 = rng.randint(l1 + 1, 16)
        est, se = mc_oracle(qs, DesignPoint.proteus(l1, l2, 1), p, 20_000, seed=t)
        misses += abs(est - fpr_proteus(qs, l1, l2, p)) > 3 * se + 1e-12
    assert misses <= 1


def small_model(seed, width=20, n_keys=200, n_queries=300):
    rng = np.random.default_rng(seed)
    keys = SortedKeys(rng.integers(0, 1 << width, size=n_keys).tolist(), width)
    left = rng.integers(0, 1 << width, size=4 * n_queries)
    right = np.minimum(left + rng.integers(0, 1 << rng.integers(1, 12), size=left.size), (1 << width) - 1)
    lo = np.searchsorted(keys.array, left.astype(np.uint64))
    hi = np.searchsorted(keys.array, right.astype(np.uint64), side="right")
    ok = (hi == lo)
    return keys, left[ok][:n_queries], right[ok][:n_queries]


@pytest.mark.parametrize("seed", range(4))
def test_batch_model_matches_per_query_formulas(seed):
    keys, left, right = small_model(seed)
    model = SampleModel(keys, left, right)
    qs = [query_stats(RangeQuery(int(a), int(b)), keys) for a, b in zip(left, right)]
    budget = 10 * len(keys)
    counts = model.counts
    for l1, l2 in [(0, 9), (0, 17), (6, 12), (8, 20), (5, 0)]:
        design = DesignPoint.proteus(l1, l2, budget) if l1 else DesignPoint.pbf1(l2, budget)
        p = float(plan_fpr(budget - model.trie_bits[l1], float(counts[l2]))) if l2 else 1.0
        ref = np.mean([fpr_proteus(s, l1, l2, p) for s in qs])
        assert model.exact_fpr(design) == pytest.approx(ref, abs=1e-9)
    for form in ("verbatim", "independent"):
        design = DesignPoint.pbf2(7, 15, 0.5, budget)
        m1 = math.ceil(0.5 * budget)
        p1 = float(plan_fpr(m1, float(counts[7])))
        p2 = float(plan_fpr(budget - m1, float(counts[15])))
        ref = np.mean([fpr_2pbf(s, 7, 15, p1, p2, form) for s in qs])
        assert model.exact_fpr(design, form) == pytest.approx(ref, abs=1e-9)


def test_bins_place_queries_by_probe_count():
    model = SampleModel(TOY, [0x020030, 0x500000], [0x020079, 0x5000FF])
    bins = model.query_bins(16, 20)
    assert bins.counts[0] == 1  # resolved by the trie
    assert bins.counts[3] == 1 and bins.sums[3] == 5  # five probes land in [4, 8)


@given(st.integers(0, 10_000))
def test_binned_close_to_exact(seed):
    keys, left, right = small_model(seed)
    model = SampleModel(keys, left, right)
    budget = 8 * len(keys)
    for l1 in (0, 6, 10):
        for l2 in (12, 16, 20):
            d = DesignPoint.proteus(l1, l2, budget) if l1 else DesignPoint.pbf1(l2, budget)
            assert abs(model.fpr(d) - model.exact_fpr(d)) < 0.01


def test_selection_hand_example():
    keys = SortedKeys([0b1000], 4)
    verdict = select_design(keys, [RangeQuery(0b0000, 0b0011), RangeQuery(0b1100, 0b1111)], 10_000)
    assert verdict.expected_fpr == 0.0
    assert verdict.chosen.family == "proteus"


@given(st.integers(0, 10_000))
def test_superset_dominance_and_budget_monotonicity(seed):
    keys, left, right = small_model(seed, n_queries=150)
    model = SampleModel(keys, left, right)
    prev = 1.0
    for bpk in (4, 8, 12, 16):
        budget = bpk * len(keys)
        hybrid = model.select(budget).expected_fpr
        assert hybrid <= model.select(budget, "pbf1").expected_fpr
        assert hybrid <= prev
        prev = hybrid


def test_tie_rule():
    keys = SortedKeys([0b1000], 4)
    sample = [RangeQuery(0b0000, 0b0011), RangeQuery(0b1100, 0b1111)]
    last = select_design(keys, sample, 10_000)
    first = select_design(keys, sample, 10_000, strict=True)
    assert last.expected_fpr == first.expected_fpr == 0.0
    order = list(last.per_design)
    assert order.index(first.chosen) < order.index(last.chosen)


def test_coarse_candidates():
    keys, left, right = small_model(1)
    model = SampleModel(keys, left, right, coarse=5)
    assert model.l2_candidates.tolist() == [1, 6, 10, 15, 20]
