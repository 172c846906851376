"""Experiment harness: mechanism x rule x instance matrices to CSV.

Every run row records welfare, surplus, payments, winner count, wall time
and oracle-query counts, with the welfare recomputed independently at
report time as a consistency check.  Rows are keyed and sorted so a rerun
with the same config produces the same CSV body; wall-time is the one
column excluded from that determinism contract.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .descending import CostScaledDemand, ExactDemand, named_schedule, run_descending
from .instances import BipartiteGraph, ExperimentConfig, active_fraction, build_instance
from .online import named_order, order_random, run_posted_price
from .scoring import ONLINE_CAPABLE_RULES, RULE_NAMES, RandomSeed, make_rule
from .selection import run_meta, run_meta_lazy
from .sealed_bid import (
    AuctionOutcome,
    ExactOptimizerConfig,
    exact_opt,
    run_sealed_bid,
    run_sealed_bid_lazy,
    run_vcg,
)
from .valuation import CoverageInstance, CoverageOracle, stable_hash64

CSV_SCHEMA = 1

CSV_COLUMNS = (
    "instance_id",
    "n",
    "s",
    "active_fraction",
    "mechanism",
    "rule",
    "welfare",
    "surplus",
    "total_payment",
    "winner_count",
    "wall_time_ms",
    "oracle_queries",
    "seed",
    "skip_reason",
)


@dataclass
class RunRecord:
    instance_id: str
    n: int
    s: float
    active_fraction: float
    mechanism: str
    rule: str
    welfare: float | None
    surplus: float | None
    total_payment: float | None
    winner_count: int | None
    wall_time_ms: float | None
    oracle_queries: int | None
    seed: int
    skip_reason: str = ""

    def key(self):
        return (self.n, self.s, self.instance_id, self.mechanism, self.rule)

    def row(self, include_timing: bool = True) -> list[str]:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return f"{x:.9g}"
            return str(x)

        values = [
            self.instance_id,
            self.n,
            f"{self.s:g}",
            f"{self.active_fraction:.6f}",
            self.mechanism,
            self.rule,
            fmt(self.welfare),
            fmt(self.surplus),
            fmt(self.total_payment),
            fmt(self.winner_count),
            fmt(self.wall_time_ms) if include_timing else "",
            fmt(self.oracle_queries),
            str(self.seed),
            self.skip_reason,
        ]
        return [str(v) for v in values]


@dataclass(frozen=True)
class MechanismSpec:
    """Parsed "name" or "name:rule" mechanism selector."""

    name: str
    rule: str | None = None

    @classmethod
    def parse(cls, text: str) -> "MechanismSpec":
        name, _, rule = text.partition(":")
        spec = cls(name=name, rule=rule or None)
        if spec.name not in ("alloc", "sealed", "posted", "vcg", "opt", "da"):
            raise ValueError(f"unknown mechanism {spec.name!r}")
        if spec.name in ("alloc", "sealed", "posted") and spec.rule not in RULE_NAMES:
            raise ValueError(f"mechanism {text!r} needs a rule name among {RULE_NAMES}")
        if spec.name == "posted" and spec.rule not in ONLINE_CAPABLE_RULES:
            raise ValueError(f"posted-price mechanisms need an online-capable rule, not {spec.rule!r}")
        if spec.name == "da" and spec.rule not in ("exact", "cost-scaled"):
            raise ValueError("da mechanisms take an oracle: da:exact or da:cost-scaled")
        return spec

    def label(self) -> tuple[str, str]:
        return self.name, self.rule or ""


# Allocation-only rows: the welfare comparisons of the experiment matrix do
# not need payments, and the distorted rule has no lazy payment path, so the
# large-n sweeps run the selection loops alone.
DEFAULT_MECHANISMS = (
    "alloc:greedy-margin",
    "alloc:greedy-rate",
    "alloc:cost-scaled",
    "alloc:distorted",
)


def run_mechanism(
    spec: MechanismSpec,
    instance: CoverageInstance,
    costs: Sequence[float],
    seed: int,
    *,
    vcg_cap: int = 12,
    epsilon: float | None = None,
    arrival_order: str | None = None,
    da_schedule: str = "lex",
) -> tuple[AuctionOutcome | None, int, str]:
    """Run one mechanism on one instance; (outcome, queries, skip_reason)."""
    oracle = CoverageOracle(instance)
    n = oracle.n
    if spec.name in ("vcg", "opt", "da") and (spec.name != "da" or spec.rule == "exact") and n > vcg_cap:
        return None, 0, f"exhaustive-optimizer-cap:{vcg_cap}"

    if spec.name == "alloc":
        rule = make_rule(spec.rule, n)
        runner = run_meta_lazy if rule.diminishing_return else run_meta
        trace = runner(rule, oracle, costs, seed=RandomSeed(seed))
        outcome = AuctionOutcome(trace.winners, (0.0,) * n, value=oracle.value(trace.winners), trace=trace)
    elif spec.name == "vcg":
        outcome = run_vcg(oracle, costs, ExactOptimizerConfig(max_exhaustive_n=vcg_cap))
    elif spec.name == "opt":
        winners, _ = exact_opt(oracle, costs, ExactOptimizerConfig(max_exhaustive_n=vcg_cap))
        outcome = AuctionOutcome(winners, (0.0,) * n, value=oracle.value(winners))
    elif spec.name == "sealed":
        rule = make_rule(spec.rule, n)
        runner = run_sealed_bid_lazy if rule.diminishing_return else run_sealed_bid
        outcome = runner(rule, oracle, costs, seed=RandomSeed(seed))
    elif spec.name == "posted":
        rule = make_rule(spec.rule, n)
        if arrival_order is None:
            order = order_random(n, seed)
        else:
            order = named_order(arrival_order, n, rule=rule, oracle=oracle, costs=costs)
        posted = run_posted_price(rule, oracle, costs, order)
        outcome = AuctionOutcome(posted.winners, posted.payments, value=oracle.value(posted.winners))
    else:  # da
        initial = [oracle.marginal(i, ()) for i in range(n)]
        eps = epsilon if epsilon is not None else max(max(initial, default=1.0), 1.0) / 50.0
        if spec.rule == "exact":
            demand = ExactDemand(oracle, ExactOptimizerConfig(max_exhaustive_n=vcg_cap))
        else:
            demand = CostScaledDemand(oracle)
        outcome = run_descending(oracle, costs, demand, named_schedule(da_schedule, n), eps)
    return outcome, oracle.query_count, ""


def _instance_records(
    graph: BipartiteGraph,
    n: int,
    s: float,
    index: int,
    specs: Sequence[MechanismSpec],
    instances: int,
    seed: int,
    vcg_cap: int,
    epsilon: float | None,
    arrival_order: str | None,
    da_schedule: str,
    want_traces: bool,
) -> tuple[list[RunRecord], list[dict]]:
    """All mechanism rows for one sampled instance."""
    cfg = ExperimentConfig(n=n, s=s, instances=instances, seed=seed)
    instance, costs = build_instance(graph, cfg, index)
    frac = active_fraction(instance, costs)
    instance_id = f"n{n}-s{s:g}-i{index}"
    run_seed = stable_hash64(seed, n, int(s * 1000), index) % 2**31
    records: list[RunRecord] = []
    traces: list[dict] = []
    for spec in specs:
        t0 = time.perf_counter()
        outcome, queries, skip = run_mechanism(
            spec, instance, costs, run_seed, vcg_cap=vcg_cap, epsilon=epsilon,
            arrival_order=arrival_order, da_schedule=da_schedule,
        )
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        mech, rule = spec.label()
        if want_traces and outcome is not None and outcome.trace is not None:
            traces.append(
                {"instance_id": instance_id, "mechanism": mech, "rule": rule,
                 "trace": outcome.trace.to_json()}
            )
        if outcome is None:
            records.append(
                RunRecord(instance_id, n, s, frac, mech, rule, None, None, None, None,
                          elapsed_ms, None, run_seed, skip)
            )
            continue
        check_oracle = CoverageOracle(instance)
        welfare = check_oracle.value(outcome.winners) - sum(costs[i] for i in outcome.winners)
        claimed = outcome.welfare(costs)
        if abs(welfare - claimed) > 1e-9:
            raise AssertionError(
                f"report-time welfare {welfare!r} disagrees with mechanism claim {claimed!r}"
            )
        records.append(
            RunRecord(instance_id, n, s, frac, mech, rule, welfare,
                      outcome.auctioneer_surplus, outcome.total_payment,
                      len(outcome.winners), elapsed_ms, queries, run_seed)
        )
    return records, traces


_POOL_STATE: dict = {}


def _pool_init(graph, specs, instances, seed, vcg_cap, epsilon, arrival_order, da_schedule):
    _POOL_STATE["graph"] = graph
    _POOL_STATE["args"] = (specs, instances, seed, vcg_cap, epsilon, arrival_order, da_schedule)


def _pool_task(cell: tuple[int, float, int]) -> list[RunRecord]:
    n, s, index = cell
    specs, instances, seed, vcg_cap, epsilon, arrival_order, da_schedule = _POOL_STATE["args"]
    records, _ = _instance_records(
        _POOL_STATE["graph"], n, s, index, specs, instances, seed,
        vcg_cap, epsilon, arrival_order, da_schedule, want_traces=False,
    )
    return records


def experiment_records(
    graph: BipartiteGraph,
    n_values: Sequence[int],
    s_values: Sequence[float],
    instances: int,
    mechanisms: Sequence[str],
    seed: int,
    *,
    vcg_cap: int = 12,
    epsilon: float | None = None,
    arrival_order: str | None = None,
    da_schedule: str = "lex",
    trace_sink: list | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """The full mechanism x rule x instance matrix, sorted by record key.

    Per-instance seeds derive from (config seed, n, s, index), and records
    are reduced in key order, so the output is identical across reruns and
    worker counts.  Trace collection forces the serial path.
    """
    specs = [MechanismSpec.parse(m) for m in mechanisms]
    cells = [(n, s, index) for n in n_values for s in s_values for index in range(instances)]
    records: list[RunRecord] = []
    if workers > 1 and trace_sink is None and len(cells) > 1:
        from concurrent.futures import ProcessPoolExecutor

        initargs = (graph, specs, instances, seed, vcg_cap, epsilon, arrival_order, da_schedule)
        chunk = max(1, len(cells) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init, initargs=initargs) as pool:
            for recs in pool.map(_pool_task, cells, chunksize=chunk):
                records.extend(recs)
    else:
        for n, s, index in cells:
            recs, traces = _instance_records(
                graph, n, s, index, specs, instances, seed, vcg_cap, epsilon,
                arrival_order, da_schedule, want_traces=trace_sink is not None,
            )
            records.extend(recs)
            if trace_sink is not None:
                trace_sink.extend(traces)
    records.sort(key=RunRecord.key)
    return records


def write_csv(records: Sequence[RunRecord], path_or_buf, include_timing: bool = True) -> None:
    close = False
    if isinstance(path_or_buf, (str,)):
        buf = open(path_or_buf, "w", newline="")
        close = True
    else:
        buf = path_or_buf
    try:
        buf.write(f"# schema={CSV_SCHEMA}\n")
        writer = csv.writer(buf)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row(include_timing=include_timing))
    finally:
        if close:
            buf.close()


def csv_body(path: str, drop_timing: bool = True) -> str:
    """Canonical CSV body used for determinism comparisons (no wall time)."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    out = []
    timing_col = CSV_COLUMNS.index("wall_time_ms")
    for line in lines:
        if line.startswith("#"):
            out.append(line)
            continue
        cells = next(csv.reader([line]))
        if drop_timing and len(cells) == len(CSV_COLUMNS):
            cells = cells[:timing_col] + cells[timing_col + 1 :]
        out.append(",".join(cells))
    return "\n".join(out)


def bucket_summary(records: Sequence[RunRecord], width: float = 0.1) -> list[dict]:
    """Mean welfare grouped by (n, mechanism, rule, active-fraction bucket)."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        if rec.welfare is None:
            continue
        bucket = min(int(rec.active_fraction / width), int(1.0 / width) - 1)
        groups.setdefault((rec.n, rec.mechanism, rec.rule, bucket), []).append(rec.welfare)
    rows = []
    for (n, mech, rule, bucket), welfares in sorted(groups.items()):
        rows.append(
            {
                "n": n,
                "mechanism": mech,
                "rule": rule,
                "bucket_lo": round(bucket * width, 3),
                "bucket_hi": round((bucket + 1) * width, 3),
                "count": len(welfares),
                "mean_welfare": float(np.mean(welfares)),
            }
        )
    return rows


def bench_records(
    graph: BipartiteGraph,
    n_values: Sequence[int],
    rules: Sequence[str],
    seed: int,
    *,
    vcg_cap: int = 12,
) -> list[dict]:
    """Wall time and query counts per rule and n, lazy and naive side by side."""
    rows: list[dict] = []
    for n in n_values:
        cfg = ExperimentConfig(n=n, s=2.0, instances=1, seed=seed)
        instance, costs = build_instance(graph, cfg, 0)
        for rule_name in rules:
            rule = make_rule(rule_name, n)
            variants = [("naive", run_meta)]
            if rule.diminishing_return:
                variants.append(("lazy", run_meta_lazy))
            for variant, fn in variants:
                oracle = CoverageOracle(instance)
                t0 = time.perf_counter()
                trace = fn(rule, oracle, costs, seed=RandomSeed(seed))
                elapsed = (time.perf_counter() - t0) * 1e3
                rows.append(
                    {
                        "n": n,
                        "mechanism": "allocation",
                        "rule": rule_name,
                        "variant": variant,
                        "wall_time_ms": round(elapsed, 3),
                        "oracle_queries": oracle.query_count,
                        "winners": len(trace.winners),
                        "skip_reason": "",
                    }
                )
        if n <= vcg_cap:
            oracle = CoverageOracle(instance)
            t0 = time.perf_counter()
            run_vcg(oracle, costs, ExactOptimizerConfig(max_exhaustive_n=vcg_cap))
            elapsed = (time.perf_counter() - t0) * 1e3
            rows.append(
                {
                    "n": n, "mechanism": "vcg", "rule": "", "variant": "exact",
                    "wall_time_ms": round(elapsed, 3), "oracle_queries": oracle.query_count,
                    "winners": None, "skip_reason": "",
                }
            )
        else:
            rows.append(
                {
                    "n": n, "mechanism": "vcg", "rule": "", "variant": "exact",
                    "wall_time_ms": None, "oracle_queries": None, "winners": None,
                    "skip_reason": f"exhaustive-optimizer-cap:{vcg_cap}",
                }
            )
    return rows
