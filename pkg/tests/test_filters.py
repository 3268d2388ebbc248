import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from proteus.cpfpr import count_key_prefixes, trie_mem
from proteus.errors import InfeasibleDesignError, InvalidDesignError
from proteus.filters import SPLITS, DesignPoint, build_filter, scan_runs
from proteus.keyspace import RangeQuery, SortedKeys

TOY_KEYS = [0x00A011, 0x020010, 0x0200F5, 0x031234]


def probed_prefixes(filt, q):
    seen = []
    contains = filt.bloom.contains

    def spy(p):
        seen.append(p)
        return contains(p)

    filt.bloom.contains = spy
    out = filt.query(q, short_circuit=False)
    filt.bloom.contains = contains
    return out, seen


@pytest.fixture
def toy():
    keys = SortedKeys(TOY_KEYS, 24)
    return build_filter(keys, DesignPoint.proteus(16, 20, 4000), seed=1)


def test_query_resolved_in_trie(toy):
    out, seen = probed_prefixes(toy, RangeQuery(0x00F200, 0x010000))
    assert not out.positive
    assert out.bloom_probes == 0 and seen == []


def test_query_resolved_in_bloom(toy):
    out, seen = probed_prefixes(toy, RangeQuery(0x020073, 0x02009C))
    assert seen == [0x02007, 0x02008, 0x02009]
    assert out.trie_probes == 1 and out.bloom_probes == 3


def test_design_validation():
    with pytest.raises(InvalidDesignError):
        DesignPoint.proteus(8, 8, 100)
    with pytest.raises(InvalidDesignError):
        DesignPoint.proteus(0, 0, 100)
    with pytest.raises(InvalidDesignError):
        DesignPoint.pbf2(4, 8, 0.3, 100)
    with pytest.raises(InvalidDesignError):
        DesignPoint("pbf1", 2, 8, 100)
    assert DesignPoint.pbf1(12, 100).l1 == 0


def test_trie_over_budget():
    keys = SortedKeys(range(0, 4000, 3), 16)
    with pytest.raises(InfeasibleDesignError):
        build_filter(keys, DesignPoint.proteus(14, 0, 100))


def random_design(data, keys, budget):
    width = keys.width
    family = data.draw(st.sampled_from(["proteus", "pbf1", "pbf2"]))
    if family == "pbf1":
        return DesignPoint.pbf1(data.draw(st.integers(1, width)), budget)
    l1 = data.draw(st.integers(1, width - 1))
    l2 = data.draw(st.integers(l1 + 1, width))
    if family == "pbf2":
        return DesignPoint.pbf2(l1, l2, data.draw(st.sampled_from(SPLITS)), budget)
    shape = data.draw(st.sampled_from(["hybrid", "trie", "bloom"]))
    trie_bits = trie_mem(l1, count_key_prefixes(keys))
    if shape == "trie":
        return DesignPoint.proteus(l1, 0, trie_bits)
    if shape == "bloom":
        return DesignPoint.proteus(0, l2, budget)
    return DesignPoint.proteus(l1, l2, trie_bits + budget)


@given(st.data())
def test_no_false_negatives_and_scalar_matches_batch(data):
    width = data.draw(st.sampled_from([12, 24, 64, 80]))
    raw = data.draw(st.lists(st.integers(0, (1 << width) - 1), min_size=1, max_size=60))
    keys = SortedKeys(raw, width)
    design = random_design(data, keys, 8 * len(keys))
    filt = build_filter(keys, design, seed=data.draw(st.integers(0, 99)), max_probes=data.draw(st.sampled_from([5, 1 << 20])))
    assert filt.size_bits <= design.budget
    queries = []
    for _ in range(20):
        a = data.draw(st.integers(0, (1 << width) - 1))
        b = min((1 << width) - 1, a + data.draw(st.integers(0, 1 << min(width - 1, 20))))
        queries.append(RangeQuery(a, b))
    hit = keys.values[0]
    queries.append(RangeQuery(max(0, hit - 3), hit))
    batch = filt.query_batch([q.left for q in queries], [q.right for q in queries])
    for i, q in enumerate(queries):
        out = filt.query(q)
        assert out == batch[i]
        if keys.intersects(q):
            assert out.positive


def test_capped_queries_report_positive():
    keys = SortedKeys([5, 900], 16)
    filt = build_filter(keys, DesignPoint.pbf1(16, 10_000), max_probes=4)
    out = filt.query(RangeQuery(1000, 60_000))
    assert out.positive and out.capped and out.bloom_probes == 4


@given(st.integers(0, (1 << 64) - 1), st.integers(1, 3000), st.integers(1, 2000))
def test_scan_runs_matches_sequential_scan(start, count, cap):
    assume(start + count <= 1 << 64)
    filt = build_filter(SortedKeys([1], 64), DesignPoint.pbf1(64, 40))
    hit, probes, capped = scan_runs(filt.bloom, [start], [count], [cap])
    first = next((i for i in range(min(count, cap)) if filt.bloom.contains(start + i)), None)
    if first is not None:
        expected = (True, first + 1, False)
    elif count > cap:
        expected = (True, cap, True)
    else:
        expected = (False, count, False)
    assert (bool(hit[0]), int(probes[0]), bool(capped[0])) == expected
