"""Evaluation and sweep runs that produce report rows."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..cpfpr import SampleModel
from ..errors import InfeasibleDesignError, InvariantViolation
from ..filters import DEFAULT_MAX_PROBES, SPLITS, DesignPoint, build_filter
from ..keyspace import SortedKeys
from ..workloads import QuerySet


@dataclass
class ReportRow:
    workload: str
    family: str
    bpk: float
    l1: int | None
    l2: int | None
    split: float | None
    predicted_fpr: float | None
    observed_fpr: float | None
    mean_trie_probes: float | None
    mean_bloom_probes: float | None
    model_ms: float
    build_ms: float
    n_eval: int
    status: str = "ok"


COLUMNS = [f.name for f in fields(ReportRow)]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([_cell(d[c]) for c in COLUMNS])
    return buf.getvalue()


@dataclass
class Workload:
    name: str
    keys: SortedKeys
    evaluation: QuerySet
    sample: QuerySet

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    def budget(self, bpk: float) -> int:
        return int(bpk * self.n_keys)


@dataclass
class Observation:
    fpr: float
    trie_probes: float
    bloom_probes: float
    n_empty: int


def observe(filt, evaluation: QuerySet) -> Observation:
    """FPR over the empty queries; raises if any non-empty query is rejected."""
    out = filt.query_batch(evaluation.left, evaluation.right)
    missed = ~evaluation.empty & ~out.positive
    if missed.any():
        raise InvariantViolation(f"{int(missed.sum())} false negatives")
    e = evaluation.empty
    n = int(e.sum())
    if not n:
        return Observation(0.0, 0.0, 0.0, 0)
    return Observation(float(out.positive[e].mean()), float(out.trie_probes[e].mean()),
                       float(out.bloom_probes[e].mean()), n)


def _row(w: Workload, design: DesignPoint, bpk: float, predicted, obs: Observation | None,
         model_ms: float, build_ms: float, status: str = "ok") -> ReportRow:
    return ReportRow(
        w.name, design.family, bpk, design.l1, design.l2,
        design.split if design.family == "pbf2" else None,
        None if predicted is None else float(predicted),
        obs.fpr if obs else None, obs.trie_probes if obs else None, obs.bloom_probes if obs else None,
        model_ms, build_ms, obs.n_empty if obs else 0, status,
    )


def eval_rows(w: Workload, bpk: float, families=("proteus",), seed: int = 0, *, coarse: int | None = None,
              max_probes: int = DEFAULT_MAX_PROBES) -> list[ReportRow]:
    """Select a design per family from the sample, build it and measure it."""
    budget = w.budget(bpk)
    t0 = time.perf_counter()
    model = SampleModel(w.keys, w.sample.left, w.sample.right, coarse=coarse)
    shared_ms = 1e3 * (time.perf_counter() - t0)
    rows = []
    for family in families:
        t0 = time.perf_counter()
        try:
            verdict = model.select(budget, family)
        except InfeasibleDesignError:
            rows.append(ReportRow(w.name, family, bpk, None, None, None, None, None, None, None,
                                  shared_ms, 0.0, 0, "infeasible"))
            continue
        model_ms = shared_ms + 1e3 * (time.perf_counter() - t0)
        t0 = time.perf_counter()
        filt = build_filter(w.keys, verdict.chosen, seed=seed, max_probes=max_probes)
        build_ms = 1e3 * (time.perf_counter() - t0)
        rows.append(_row(w, verdict.chosen, bpk, verdict.expected_fpr, observe(filt, w.evaluation), model_ms, build_ms))
    return rows


def grid(model: SampleModel, family: str, budget: int, l1_step: int = 1, l2_step: int = 1):
    """Designs of one family on a strided grid, each paired with its feasibility."""
    k = model.width
    if family == "pbf1":
        for l2 in range(l2_step, k + 1, l2_step):
            yield DesignPoint.pbf1(l2, budget), True
        return
    if family == "proteus":
        for l1 in range(0, k, l1_step):
            ok = bool(model.trie_bits[l1] <= budget)
            if l1:
                yield DesignPoint.proteus(l1, 0, budget), ok
            for l2 in range(l1 + l2_step, k + 1, l2_step):
                yield DesignPoint.proteus(l1, l2, budget), ok
        return
    for split in SPLITS:
        for l1 in range(l1_step, k, l1_step):
            for l2 in range(l1 + l2_step, k + 1, l2_step):
                yield DesignPoint.pbf2(l1, l2, split, budget), True


def sweep_rows(w: Workload, bpk: float, family: str = "proteus", seed: int = 0, *, l1_step: int = 1,
               l2_step: int = 1, max_probes: int = 1 << 16, observe_cells: bool = True) -> list[ReportRow]:
    """Predicted and observed FPR for every design of a strided grid.

    Designs whose trie exceeds the budget are reported with status ``infeasible``.
    """
    budget = w.budget(bpk)
    t0 = time.perf_counter()
    model = SampleModel(w.keys, w.sample.left, w.sample.right)
    base_ms = 1e3 * (time.perf_counter() - t0)
    rows = []
    for design, ok in grid(model, family, budget, l1_step, l2_step):
        if not ok:
            rows.append(_row(w, design, bpk, None, None, 0.0, 0.0, "infeasible"))
            continue
        t0 = time.perf_counter()
        predicted = model.fpr(design)
        model_ms = base_ms + 1e3 * (time.perf_counter() - t0)
        obs, build_ms = None, 0.0
        if observe_cells:
            t0 = time.perf_counter()
            filt = build_filter(w.keys, design, seed=seed, max_probes=max_probes)
            build_ms = 1e3 * (time.perf_counter() - t0)
            obs = observe(filt, w.evaluation)
        rows.append(_row(w, design, bpk, predicted, obs, model_ms, build_ms))
    return rows


def timing_ratio(rows: list[ReportRow]) -> float | None:
    """Largest model/build time ratio among proteus and single-prefix rows."""
    ratios = [r.model_ms / r.build_ms for r in rows
              if r.family in ("proteus", "pbf1") and r.status == "ok" and r.build_ms > 0]
    return max(ratios) if ratios else None


def zero_timings(rows: list[ReportRow]) -> None:
    for r in rows:
        r.model_ms = r.build_ms = 0.0


def mean_abs_gap(rows: list[ReportRow]) -> float:
    gaps = [abs(r.predicted_fpr - r.observed_fpr) for r in rows
            if r.predicted_fpr is not None and r.observed_fpr is not None]
    return float(np.mean(gaps)) if gaps else 0.0
