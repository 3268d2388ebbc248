import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from proteus.bitops import BitVector, lcp_array, trailing_zeros


@given(st.lists(st.booleans(), min_size=1, max_size=1500))
def test_rank_select_match_brute_force(bits):
    bv = BitVector(np.array(bits))
    prefix = np.cumsum(bits)
    for i in range(0, len(bits), max(1, len(bits) // 50)):
        assert bv.rank1(i) == prefix[i]
    ones = np.flatnonzero(bits)
    for j in range(0, len(ones), max(1, len(ones) // 50)):
        assert bv.select1(j + 1) == ones[j]
    assert bv.size_bits >= len(bits)


def test_trailing_zeros_and_lcp():
    x = np.array([0, 1, 8, 1 << 63], dtype=np.uint64)
    assert trailing_zeros(x, 64).tolist() == [64, 0, 3, 63]
    a = np.array([0b1010, 0b1111], dtype=np.uint64)
    b = np.array([0b1000, 0b1111], dtype=np.uint64)
    assert lcp_array(a, b, 4).tolist() == [2, 4]
