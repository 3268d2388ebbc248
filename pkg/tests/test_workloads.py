import struct

import numpy as np
import pytest

from proteus.errors import FormatError, InvalidQueryError
from proteus.keyspace import SortedKeys
from proteus.workloads import (
    WorkloadSpec, gen_keys, gen_queries, gen_string_keys, label_empty, load_queries, load_sosd,
    load_string_keys, real_pool, widen, write_queries, write_sosd, write_string_keys,
)


def test_keys_deterministic_sorted_unique():
    spec = WorkloadSpec(n_keys=50_000, seed=4)
    a, b = gen_keys(spec), gen_keys(spec)
    assert np.array_equal(a.array, b.array)
    assert len(a) == 50_000
    assert np.all(np.diff(a.array.astype(np.float64)) >= 0) and np.unique(a.array).size == 50_000


def test_normal_keys_centred():
    keys = gen_keys(WorkloadSpec(key_dist="normal", n_keys=100_000, seed=1))
    vals = keys.array.astype(np.float64)
    sigma = 0.01 * 2.0 ** 64
    assert abs(vals.mean() - 2.0 ** 63) <= 3 * sigma / np.sqrt(len(vals))
    assert vals.std() == pytest.approx(sigma, rel=0.02)


@pytest.mark.parametrize("kind", ["uniform", "correlated", "split", "point"])
def test_query_shapes(kind):
    rmax = 0 if kind == "point" else 256
    spec = WorkloadSpec(query_kind=kind, n_keys=2000, n_queries=3000, n_sample=500, rmax=rmax, seed=2)
    keys = gen_keys(spec)
    ev, sample = gen_queries(spec, keys)
    width = (ev.right - ev.left).astype(np.int64)
    if kind == "point":
        assert np.all(width == 0)
    else:
        assert width.min() >= 0 and width.max() <= 256
    assert sample.empty.all() and len(sample) == 500
    assert np.array_equal(label_empty(keys, sample.left, sample.right), np.ones(500, bool))
    assert not set(zip(sample.left.tolist(), sample.right.tolist())) & set(zip(ev.left.tolist(), ev.right.tolist()))


def test_correlated_queries_start_near_keys():
    spec = WorkloadSpec(query_kind="correlated", n_keys=1000, n_queries=2000, corr_degree=64, seed=3)
    keys = gen_keys(spec)
    ev, _ = gen_queries(spec, keys)
    idx = np.searchsorted(keys.array, ev.left, side="left") - 1
    gap = (ev.left - keys.array[idx]).astype(np.float64)
    assert np.all(idx >= 0) and gap.min() >= 1 and gap.max() <= 64


def test_labels_match_linear_scan():
    keys = SortedKeys([3, 40, 41, 200], 8)
    left = np.array([0, 4, 39, 42, 201], dtype=np.uint64)
    right = np.array([2, 39, 40, 199, 255], dtype=np.uint64)
    brute = [not any(a <= k <= b for k in keys) for a, b in zip(left.tolist(), right.tolist())]
    assert label_empty(keys, left, right).tolist() == brute


def test_rmax_with_points_rejected():
    with pytest.raises(ValueError):
        WorkloadSpec(query_kind="point", rmax=8)
    with pytest.raises(ValueError):
        WorkloadSpec(query_kind="uniform", rmax=1)


def test_sosd_round_trip(tmp_path):
    path = tmp_path / "k.sosd"
    write_sosd(path, [7, 3])
    assert load_sosd(path).tolist() == [7, 3]
    path.write_bytes(struct.pack("<Q", 3) + struct.pack("<2Q", 7, 3))
    with pytest.raises(FormatError):
        load_sosd(path)


def test_query_file_round_trip(tmp_path):
    spec = WorkloadSpec(n_keys=500, n_queries=400, n_sample=50, seed=9)
    keys = gen_keys(spec)
    ev, _ = gen_queries(spec, keys)
    write_queries(tmp_path / "q.txt", ev)
    back = load_queries(tmp_path / "q.txt", keys)
    assert np.array_equal(back.left, ev.left) and np.array_equal(back.right, ev.right)
    assert np.array_equal(back.empty, ev.empty)
    (tmp_path / "bad.txt").write_text("9,3\n")
    with pytest.raises(InvalidQueryError):
        load_queries(tmp_path / "bad.txt", keys)


def test_string_keys(tmp_path):
    spec = WorkloadSpec(key_dist="normal", n_keys=4000, seed=5)
    keys = gen_string_keys(spec, 25)
    assert keys.width == 200
    msb = np.array([v >> 192 for v in keys.values])
    assert abs(msb.mean() - 128) < 3
    write_string_keys(tmp_path / "s.txt", keys)
    assert load_string_keys(tmp_path / "s.txt").values == keys.values


def test_variable_length_strings_keep_byte_order():
    keys = gen_string_keys(WorkloadSpec(n_keys=300, seed=6), 6, min_bytes=1)
    raw = [v.to_bytes(6, "big").rstrip(b"\x00") for v in keys.values]
    assert raw == sorted(raw)


def test_widen_pads_with_nulls():
    keys = SortedKeys([1, 0xFF], 64)
    wide = widen(keys, 2)
    assert wide.width == 80 and wide.values == [1 << 16, 0xFF << 16]


def test_real_pool_disjoint():
    vals = np.arange(1000, dtype=np.uint64) * 7
    keys, pool = real_pool(vals, 600, 300, seed=1)
    assert keys.size == 600 and pool.size == 300
    assert not set(keys.tolist()) & set(pool.tolist())
