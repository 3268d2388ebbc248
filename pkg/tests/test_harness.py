import csv
import io

import numpy as np
import pytest

from proteus.filters import BatchOutcome
from proteus.harness import cli
from proteus.harness.lsm import QueryQueue, SegmentedStore, ShiftConfig, run_shift
from proteus.harness.runner import COLUMNS, Workload, eval_rows, sweep_rows
from proteus.workloads import WorkloadSpec, gen_keys, gen_queries

SMALL = ["--n-keys", "3000", "--n-queries", "3000", "--sample-size", "1000", "--seed", "7"]


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def run(args, capsys):
    code = cli.main(args)
    return code, capsys.readouterr().out


def test_gen_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["gen", *SMALL, "--out-dir", str(tmp_path / d)]) == 0
    for name in ("keys.sosd", "queries.txt", "sample.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_then_eval_matches_in_memory_run(tmp_path, capsys):
    cli.main(["gen", *SMALL, "--out-dir", str(tmp_path)])
    files = ["--keys", str(tmp_path / "keys.sosd"), "--queries", str(tmp_path / "queries.txt"),
             "--sample", str(tmp_path / "sample.txt")]
    code, from_files = run(["eval", *files, "--seed", "7", "--filter", "proteus,pbf1", "--deterministic"], capsys)
    assert code == 0
    code, direct = run(["eval", *SMALL, "--filter", "proteus,pbf1", "--deterministic"], capsys)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "workload"} for r in rows_of(rows)]  # noqa: E731
    assert strip(from_files) == strip(direct)


def test_eval_report_columns_and_dominance(capsys):
    code, out = run(["eval", *SMALL, "--filter", "proteus,pbf1,pbf2", "--deterministic"], capsys)
    assert code == 0
    assert out.splitlines()[0].split(",") == COLUMNS
    rows = {r["family"]: r for r in rows_of(out)}
    assert float(rows["proteus"]["predicted_fpr"]) <= float(rows["pbf1"]["predicted_fpr"])
    for r in rows.values():
        assert 0 <= float(r["observed_fpr"]) <= 1
        assert float(r["model_ms"]) == float(r["build_ms"]) == 0.0


def test_output_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        cli.main(["eval", *SMALL, "--deterministic", "--out", str(tmp_path / name)])
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_point_queries_reject_rmax():
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--query-kind", "point", "--rmax", "16"])
    assert exc.value.code == 2


def test_unknown_family_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", *SMALL, "--filter", "proteus,pbf1"])
    assert exc.value.code == 2


def test_missing_file_reports_error(tmp_path, capsys):
    assert cli.main(["eval", "--keys", str(tmp_path / "nope.sosd")]) == 1
    assert "nope.sosd" in capsys.readouterr().err


def test_false_negative_aborts(tmp_path, monkeypatch, capsys):
    from proteus.filters import ProteusFilter
    from proteus.workloads import load_sosd

    cli.main(["gen", *SMALL, "--out-dir", str(tmp_path)])
    key = int(load_sosd(tmp_path / "keys.sosd")[0])
    with open(tmp_path / "queries.txt", "a") as fh:
        fh.write(f"{key},{key}\n")
    monkeypatch.setattr(ProteusFilter, "query_batch", lambda self, left, right: BatchOutcome.empty(len(left)))
    args = ["eval", "--keys", str(tmp_path / "keys.sosd"), "--queries", str(tmp_path / "queries.txt"),
            "--sample", str(tmp_path / "sample.txt")]
    assert cli.main(args) == 3
    assert "false negative" in capsys.readouterr().err


def test_sweep_marks_infeasible_cells(capsys):
    code, out = run(["sweep", *SMALL, "--bpk", "2", "--l1-step", "8", "--l2-step", "8", "--deterministic"], capsys)
    assert code == 0
    rows = rows_of(out)
    status = {r["status"] for r in rows}
    assert status == {"ok", "infeasible"}
    for r in rows:
        if r["status"] == "infeasible":
            assert r["predicted_fpr"] == "" and int(r["l1"]) > 0


def workload(kind="uniform", seed=0, **kw):
    spec = WorkloadSpec(query_kind=kind, n_keys=5000, n_queries=5000, n_sample=2000, seed=seed, **kw)
    keys = gen_keys(spec)
    ev, sample = gen_queries(spec, keys)
    return Workload(f"{kind}-{seed}", keys, ev, sample)


def test_sweep_model_tracks_observation():
    rows = sweep_rows(workload(), 10, "pbf1", l2_step=4)
    gaps = [abs(r.predicted_fpr - r.observed_fpr) for r in rows]
    assert max(gaps) <= 0.05
    assert np.mean(gaps) <= 0.02


def test_eval_high_budget_point_queries_accurate():
    w = workload("point", rmax=0)
    (row,) = eval_rows(w, 16, ["proteus"])
    assert abs(row.predicted_fpr - row.observed_fpr) <= 0.03


def test_queue_fifo_and_sampling():
    q = QueryQueue(capacity=3, sample_every=2)
    q.offer(np.arange(5), np.arange(5))
    assert q.arrays()[0].tolist() == [1, 3]
    q.offer(np.arange(10, 15), np.arange(10, 15))
    assert q.arrays()[0].tolist() == [10, 12, 14]
    assert len(q) == 3


def test_store_partitions_and_compaction():
    rng = np.random.default_rng(0)
    keys = rng.integers(0, 1 << 63, size=4000, dtype=np.uint64)
    store = SegmentedStore(keys, n_segments=8, bpk=10)
    bounds = [(s.lo, s.hi) for s in store.segments]
    assert bounds[0][0] == 0 and bounds[-1][1] == (1 << 64) - 1
    assert all(a[1] + 1 == b[0] for a, b in zip(bounds, bounds[1:]))
    queue = QueryQueue(100, 1)
    queue.seed(keys[:50] + np.uint64(1), keys[:50] + np.uint64(1))
    assert store.rebuild(queue).rebuilt == 8
    store.put_many(np.array([5, 6], dtype=np.uint64))
    positive, empty = store.query_batch(np.array([5, 7], dtype=np.uint64), np.array([5, 7], dtype=np.uint64))
    assert positive[0] and not empty[0]
    store.compact()
    assert store.rebuild(queue).rebuilt == 1
    assert not store.memtable.size and 5 in store.segments[0].keys


def test_shift_runs_and_reports_batches():
    spec = WorkloadSpec(key_dist="normal", n_keys=5000, n_sample=500, rmax=1 << 30, rmax_correlated=64, seed=1)
    cfg = ShiftConfig(batches=4, n_queries=8000, rebuild_period=2000, queue_size=500, sample_every=5, segments=4)
    res = run_shift(spec, cfg)
    assert [r.batch for r in res] == [0, 1, 2, 3]
    assert all(0 <= r.observed_fpr <= 1 and r.n_empty > 0 for r in res)
    assert res[1].rebuilds > 0


def test_shift_cli(capsys):
    args = ["shift", "--key-dist", "normal", "--n-keys", "4000", "--n-queries", "4000", "--batches", "2",
            "--rebuild-period", "2000", "--queue-size", "400", "--sample-every", "5", "--segments", "4",
            "--rmax", str(1 << 30), "--rmax-correlated", "64", "--sample-size", "400", "--deterministic"]
    code, out = run(args, capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 2 and rows[0]["workload"].startswith("gradual-uniform-correlated-b0")
