"""Command-line entry point: ``gen``, ``eval``, ``sweep``, ``shift`` and ``plot``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..errors import FormatError, InvariantViolation, ProteusError
from ..filters import FAMILIES
from ..keyspace import SortedKeys
from ..workloads import (
    WorkloadSpec, gen_keys, gen_queries, load_queries, load_sosd, write_queries, write_sosd,
)
from .lsm import ShiftConfig, run_shift
from .runner import ReportRow, Workload, eval_rows, sweep_rows, timing_ratio, to_csv, zero_timings

DEFAULT_RMAX = 1 << 8


class UsageError(Exception):
    pass


def _add_workload(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("workload")
    g.add_argument("--keys", type=Path, help="SOSD-style key file (8-byte count, then uint64 values)")
    g.add_argument("--key-dist", choices=("uniform", "normal"), default="uniform")
    g.add_argument("--n-keys", type=int, default=100_000)
    g.add_argument("--queries", type=Path, help="query file, one 'left,right' per line")
    g.add_argument("--sample", type=Path, help="sample query file (empty queries)")
    g.add_argument("--query-kind", choices=("uniform", "correlated", "split", "point"), default="uniform")
    g.add_argument("--n-queries", type=int, default=100_000)
    g.add_argument("--rmax", type=int, default=None, help=f"max range size (default {DEFAULT_RMAX}; 0 for points)")
    g.add_argument("--rmax-correlated", type=int, default=None, help="range bound of correlated queries")
    g.add_argument("--corr-degree", type=int, default=1 << 10)
    g.add_argument("--sample-size", type=int, default=20_000)
    g.add_argument("--seed", type=int, default=0)


def _add_filter(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--bpk", type=float, default=10.0, help="bits per unique key")
    help_ = "filter family" + (" (comma-separated list allowed)" if multi else "")
    p.add_argument("--filter", default="proteus", help=help_)
    p.add_argument("--out", type=Path, help="CSV output path (default stdout)")
    p.add_argument("--deterministic", action="store_true", help="zero the timing columns")


def _families(text: str, multi: bool) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names or any(n not in FAMILIES for n in names) or (len(names) > 1 and not multi):
        raise UsageError(f"--filter must name {'families' if multi else 'one family'} from {', '.join(FAMILIES)}")
    return names


def spec_from(args) -> WorkloadSpec:
    if args.query_kind == "point":
        if args.rmax not in (None, 0):
            raise UsageError("--rmax does not apply to point queries")
        rmax = 0
    else:
        rmax = DEFAULT_RMAX if args.rmax is None else args.rmax
    try:
        return WorkloadSpec(
            key_dist="file" if args.keys else args.key_dist, query_kind=args.query_kind,
            n_keys=args.n_keys, n_queries=args.n_queries, n_sample=args.sample_size, rmax=rmax,
            corr_degree=args.corr_degree, seed=args.seed, rmax_correlated=args.rmax_correlated,
            key_path=str(args.keys) if args.keys else None,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def workload_from(args) -> Workload:
    """Keys, evaluation queries and sample from files or generators."""
    spec = spec_from(args)
    keys = SortedKeys.from_array(load_sosd(args.keys), 64) if args.keys else gen_keys(spec)
    if args.queries:
        evaluation = load_queries(args.queries, keys)
        if args.sample:
            sample = load_queries(args.sample, keys)
            if not sample.empty.all():
                raise FormatError(f"{args.sample}: sample holds non-empty queries")
        else:
            # no sample file: the first empty queries double as the sample
            idx = evaluation.empty.nonzero()[0][: args.sample_size]
            keep = np.ones(len(evaluation), dtype=bool)
            keep[idx] = False
            sample = evaluation.subset(idx)
            evaluation = evaluation.subset(keep)
        name = Path(args.queries).stem
    else:
        if args.sample:
            raise UsageError("--sample needs --queries")
        evaluation, sample = gen_queries(spec, keys)
        name = f"{spec.key_dist}-{spec.query_kind}-s{spec.seed}"
    if not len(sample):
        raise UsageError("the workload produced no empty sample queries")
    return Workload(name, keys, evaluation, sample)


def _emit(rows: list[ReportRow], args) -> None:
    if args.deterministic:
        zero_timings(rows)
    text = to_csv(rows)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    spec = spec_from(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    keys = gen_keys(spec)
    evaluation, sample = gen_queries(spec, keys)
    write_sosd(out / "keys.sosd", keys.array)
    write_queries(out / "queries.txt", evaluation)
    write_queries(out / "sample.txt", sample)
    print(f"wrote {len(keys)} keys, {len(evaluation)} queries and {len(sample)} sample queries to {out}",
          file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    families = _families(args.filter, multi=True)
    w = workload_from(args)
    rows = eval_rows(w, args.bpk, families, seed=args.seed, coarse=args.coarse)
    ratio = timing_ratio(rows)
    if ratio is not None:
        verdict = "ok" if ratio <= 2.0 else "exceeds 2x"
        print(f"model/build time ratio {ratio:.2f} ({verdict})", file=sys.stderr)
        if args.check_timing and ratio > 2.0:
            _emit(rows, args)
            raise InvariantViolation("model time exceeds twice the build time")
    _emit(rows, args)
    return 0


def cmd_sweep(args) -> int:
    family = _families(args.filter, multi=False)[0]
    w = workload_from(args)
    rows = sweep_rows(w, args.bpk, family, seed=args.seed, l1_step=args.l1_step, l2_step=args.l2_step,
                      max_probes=args.max_probes, observe_cells=not args.predict_only)
    _emit(rows, args)
    return 0


def cmd_shift(args) -> int:
    family = _families(args.filter, multi=False)[0]
    spec = spec_from(args)
    if args.keys:
        raise UsageError("shift generates its own keys; --keys is not supported")
    try:
        cfg = ShiftConfig(
            start_kind=args.start_kind, end_kind=args.end_kind, mode=args.mode, batches=args.batches,
            n_queries=args.n_queries, segments=args.segments, rebuild_period=args.rebuild_period,
            queue_size=args.queue_size, sample_every=args.sample_every, put_ratio=args.put_ratio,
            bpk=args.bpk, family=family, max_probes=args.max_probes,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    results = run_shift(spec, cfg, steady=args.steady)
    tag = "steady" if args.steady else f"{cfg.mode}-{cfg.start_kind}-{cfg.end_kind}"
    rows = [
        ReportRow(f"{tag}-b{r.batch}-r{r.ratio:.3f}", family, args.bpk, None, None, None, None,
                  r.observed_fpr, None, None, r.model_ms, r.build_ms, r.n_empty)
        for r in results
    ]
    _emit(rows, args)
    return 0


def cmd_plot(args) -> int:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise UsageError("plotting needs matplotlib (pip install matplotlib)") from e
    import csv

    with open(args.csv, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    grid_rows = [r for r in rows if r["l1"] and r["l2"] and r["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(7, 5))
    if grid_rows and len({r["l1"] for r in grid_rows}) > 1:
        l1s = sorted({int(r["l1"]) for r in grid_rows})
        l2s = sorted({int(r["l2"]) for r in grid_rows})
        mat = np.full((len(l1s), len(l2s)), np.nan)
        for r in grid_rows:
            val = r[args.value]
            if val:
                mat[l1s.index(int(r["l1"])), l2s.index(int(r["l2"]))] = float(val)
        im = ax.imshow(mat, origin="lower", aspect="auto", cmap="viridis",
                       extent=(l2s[0], l2s[-1], l1s[0], l1s[-1]))
        fig.colorbar(im, label=args.value)
        ax.set_xlabel("Bloom prefix length")
        ax.set_ylabel("trie depth / short prefix")
    elif grid_rows:
        xs = [int(r["l2"]) for r in grid_rows]
        for col in ("predicted_fpr", "observed_fpr"):
            ax.plot(xs, [float(r[col]) if r[col] else np.nan for r in grid_rows], label=col)
        ax.set_xlabel("prefix length")
        ax.set_yscale("log")
        ax.legend()
    else:
        ax.plot(range(len(rows)), [float(r["observed_fpr"]) for r in rows], marker="o")
        ax.set_xlabel("batch")
        ax.set_ylabel("observed FPR")
    fig.tight_layout()
    fig.savefig(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proteus-bench", description="Range filter benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write key, query and sample files")
    _add_workload(p)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="select, build and measure a filter")
    _add_workload(p)
    _add_filter(p, multi=True)
    p.add_argument("--coarse", type=int, default=None, help="number of Bloom prefix lengths to consider")
    p.add_argument("--check-timing", action="store_true", help="fail when model time exceeds 2x build time")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="predicted and observed FPR over a design grid")
    _add_workload(p)
    _add_filter(p)
    p.add_argument("--l1-step", type=int, default=1)
    p.add_argument("--l2-step", type=int, default=1)
    p.add_argument("--max-probes", type=int, default=1 << 16)
    p.add_argument("--predict-only", action="store_true", help="skip building filters")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("shift", help="shifting workload over LSM-lite")
    _add_workload(p)
    _add_filter(p)
    p.add_argument("--start-kind", choices=("uniform", "correlated", "split", "point"), default="uniform")
    p.add_argument("--end-kind", choices=("uniform", "correlated", "split", "point"), default="correlated")
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--mode", choices=("gradual", "extreme"), default="gradual")
    p.add_argument("--segments", type=int, default=16)
    p.add_argument("--rebuild-period", type=int, default=10_000, help="queries between compactions (0 disables)")
    p.add_argument("--queue-size", type=int, default=20_000)
    p.add_argument("--sample-every", type=int, default=100)
    p.add_argument("--put-ratio", type=float, default=2 / 3, help="puts per query")
    p.add_argument("--max-probes", type=int, default=1 << 16)
    p.add_argument("--steady", action="store_true", help="baseline: end distribution throughout")
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("plot", help="render a CSV as a heatmap or line plot (needs matplotlib)")
    p.add_argument("csv", type=Path)
    p.add_argument("--value", choices=("predicted_fpr", "observed_fpr"), default="observed_fpr")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))  # exits with status 2
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return 3
    except (ProteusError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
