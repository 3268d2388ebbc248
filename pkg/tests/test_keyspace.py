import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from proteus.errors import InvalidLengthError, InvalidQueryError, PadOverflowError, QueryNotEmptyError
from proteus.keyspace import (
    RangeQuery, SortedKeys, bytes_to_key, endpoint_analysis, interval_lcp, lcp, pad, prefix, prefix_count,
)


def test_prefix_examples():
    assert prefix(0b0100, 2, 4) == 0b01
    assert prefix(0b1000, 4, 4) == 0b1000
    assert prefix(0x020073, 16, 24) == 0x0200
    assert prefix(0xFFFF, 0, 16) == 0


def test_prefix_rejects_long_length():
    with pytest.raises(InvalidLengthError):
        prefix(1, 5, 4)


@pytest.mark.parametrize("l, count", [(1, 2), (2, 2), (3, 3), (4, 5)])
def test_prefix_count_small_range(l, count):
    cover = prefix_count(RangeQuery(0b0100, 0b1000), l, 4)
    assert cover.count == count
    assert cover.count == cover.last - cover.first + 1


def test_prefix_count_l3_members():
    cover = prefix_count(RangeQuery(0b0100, 0b1000), 3, 4)
    assert list(range(cover.first, cover.last + 1)) == [0b010, 0b011, 0b100]


def test_query_validation():
    with pytest.raises(InvalidQueryError):
        RangeQuery(5, 4)
    with pytest.raises(InvalidQueryError):
        RangeQuery(0, 16).check_width(4)
    assert RangeQuery.clamped(-3, 99, 4) == RangeQuery(0, 15)


def test_interval_lcp_examples():
    assert interval_lcp(RangeQuery(0b1001, 0b1011), [0b1000], 4) == 3
    assert interval_lcp(RangeQuery(0b0100, 0b1011), [0b0000, 0b1111], 4) == 1
    assert interval_lcp(RangeQuery(0b0000, 0b0111), [0b1111], 4) == 0


def test_interval_lcp_needs_empty_query():
    with pytest.raises(QueryNotEmptyError):
        interval_lcp(RangeQuery(0, 3), [2], 4)


def test_pad():
    assert pad(b"ab", 4) == b"ab\x00\x00"
    assert pad(b"", 2) == b"\x00\x00"
    with pytest.raises(PadOverflowError):
        pad(b"abc", 2)


@st.composite
def width_and_query(draw, max_width=12):
    k = draw(st.integers(1, max_width))
    a = draw(st.integers(0, (1 << k) - 1))
    b = draw(st.integers(a, (1 << k) - 1))
    return k, RangeQuery(a, b)


@st.composite
def empty_instance(draw, max_width=10):
    k, q = draw(width_and_query(max_width))
    keys = draw(st.lists(st.integers(0, (1 << k) - 1), max_size=64))
    keys = sorted(set(x for x in keys if not q.left <= x <= q.right))
    return k, q, keys


@given(width_and_query(16), st.data())
def test_prefix_count_matches_enumeration(kq, data):
    k, q = kq
    assume(q.right - q.left < 5000)
    l = data.draw(st.integers(1, k))
    assert prefix_count(q, l, k).count == len({x >> (k - l) for x in range(q.left, q.right + 1)})


@given(width_and_query(16))
def test_prefix_count_monotone(kq):
    k, q = kq
    counts = [prefix_count(q, l, k).count for l in range(1, k + 1)]
    assert counts == sorted(counts)
    assert counts[-1] == q.right - q.left + 1


@given(empty_instance(12))
def test_interval_lcp_matches_brute_force(inst):
    k, q, keys = inst
    assume(q.right - q.left < 600)
    brute = max((lcp(x, y, k) for x in range(q.left, q.right + 1) for y in keys), default=0)
    assert interval_lcp(q, keys, k) == brute


def endpoint_oracle(q, keys, k, l1, l2):
    """Endpoint indicators and side sizes by enumerating every value of the query."""
    members = range(q.left, q.right + 1)
    firsts = sorted({x >> (k - l1) for x in members})
    first, last = firsts[0], firsts[-1]
    key_prefixes = {x >> (k - l1) for x in keys}

    def region_inside(p):
        lo, hi = p << (k - l1), ((p + 1) << (k - l1)) - 1
        return q.left <= lo and hi <= q.right

    def side(p):
        return len({x >> (k - l2) for x in members if x >> (k - l1) == p})

    if first == last:
        return (int(not region_inside(first)), 0, int(first in key_prefixes), 0, side(first), 0)
    return (int(not region_inside(first)), int(not region_inside(last)),
            int(first in key_prefixes), int(last in key_prefixes), side(first), side(last))


@given(empty_instance(10), st.data())
def test_endpoint_analysis_matches_enumeration(inst, data):
    k, q, keys = inst
    assume(k >= 2)
    l1 = data.draw(st.integers(1, k - 1))
    l2 = data.draw(st.integers(l1 + 1, k))
    e = endpoint_analysis(q, keys, k, l1, l2)
    assert (e.i0, e.i1, e.i2, e.i3, e.l_size, e.r_size) == endpoint_oracle(q, keys, k, l1, l2)
    assert 0 <= e.l_size <= 1 << (l2 - l1) and 0 <= e.r_size <= 1 << (l2 - l1)


def test_endpoint_single_region_example():
    e = endpoint_analysis(RangeQuery(0x020073, 0x02009C), [0x020010, 0x0200F5], 24, 16, 20)
    assert e.single and e.i2 == 1
    assert (e.l_size, e.r_size) == (3, 0)


def test_endpoint_whole_regions_without_keys():
    e = endpoint_analysis(RangeQuery(0x0100, 0x02FF), [0x0000], 16, 8, 12)
    assert (e.i0, e.i1) == (0, 0)
    assert e.n_regions == 0


@given(st.lists(st.binary(min_size=1, max_size=6), min_size=2, max_size=30, unique=True))
def test_padded_order_matches_byte_order(strings):
    strings = [s for s in strings if not s.endswith(b"\x00")]
    as_keys = [bytes_to_key(pad(s, 6)) for s in strings]
    assert [s for _, s in sorted(zip(as_keys, strings))] == sorted(strings)


def test_sorted_keys_prefixes_and_subset():
    keys = SortedKeys([9, 1, 5, 5, 12], 4)
    assert keys.values == [1, 5, 9, 12]
    assert keys.prefixes(2) == [0, 1, 2, 3]
    assert keys.subset(4, 10).values == [5, 9]
    assert keys.intersects(RangeQuery(6, 9)) and not keys.intersects(RangeQuery(6, 8))
