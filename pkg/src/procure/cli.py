"""Command-line front end.

Subcommands: experiment, verify, bench, lowerbound, gen-instance,
fetch-dataset.  Exit codes: 0 success, 1 property failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, verification
from .instances import ExperimentConfig, build_instance, parse_edge_list, random_instance, synthetic_bipartite_graph

WIKI_VOTE_URL = "https://snap.stanford.edu/data/wiki-Vote.txt.gz"


def _load_graph(dataset: str, seed: int):
    if dataset == "synthetic":
        return synthetic_bipartite_graph(seed=seed)
    path = Path(dataset)
    if not path.exists():
        print(f"dataset file not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    with open(path) as fh:
        return parse_edge_list(fh)


def _cmd_experiment(args) -> int:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text())
    dataset = args.dataset or config.get("dataset", "synthetic")
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    n_values = config.get("n", [100])
    s_values = config.get("s", [2])
    instances = int(config.get("instances", 10))
    mechanisms = config.get("mechanisms", list(harness.DEFAULT_MECHANISMS))
    output = args.output or config.get("output", "experiment.csv")

    graph = _load_graph(dataset, seed)
    trace_sink: list | None = [] if args.trace else None
    records = harness.experiment_records(
        graph,
        n_values=[int(n) for n in n_values],
        s_values=[float(s) for s in s_values],
        instances=instances,
        mechanisms=mechanisms,
        seed=seed,
        vcg_cap=int(config.get("vcg_cap", 12)),
        epsilon=config.get("epsilon"),
        arrival_order=config.get("arrival_order"),
        da_schedule=config.get("da_schedule", "lex"),
        trace_sink=trace_sink,
        workers=args.workers if args.workers is not None else int(config.get("workers", 1)),
    )
    harness.write_csv(records, output, include_timing=not args.no_timing)
    print(f"wrote {len(records)} records to {output}")
    if trace_sink is not None:
        trace_path = f"{output}.traces.jsonl"
        with open(trace_path, "w") as fh:
            for entry in trace_sink:
                fh.write(json.dumps(entry) + "\n")
        print(f"wrote {len(trace_sink)} selection traces to {trace_path}")
    for row in harness.bucket_summary(records):
        print(
            f"n={row['n']} {row['mechanism']}:{row['rule']} active [{row['bucket_lo']}, {row['bucket_hi']}) "
            f"mean welfare {row['mean_welfare']:.4g} over {row['count']}"
        )
    return 0


def _cmd_verify(args) -> int:
    try:
        report = verification.run_suite(args.suite, trials=args.trials, seed=args.seed)
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(json.dumps(report.to_json(), indent=2, default=str))
    return 0 if report.passed else 1


def _cmd_bench(args) -> int:
    graph = synthetic_bipartite_graph(n_sources=max(args.n) + 500, seed=args.seed)
    rows = harness.bench_records(graph, args.n, rules=args.rules, seed=args.seed)
    out = Path(args.output)
    with open(out, "w", newline="") as fh:
        fh.write(f"# schema={harness.CSV_SCHEMA}\n")
        cols = ["n", "mechanism", "rule", "variant", "wall_time_ms", "oracle_queries", "winners", "skip_reason"]
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join("" if row[c] is None else str(row[c]) for c in cols) + "\n")
    print(f"wrote {len(rows)} bench rows to {out}")
    return 0


def _cmd_lowerbound(args) -> int:
    if args.epsilon is None:
        args.epsilon = 1.0 / (2 * args.L)
    if args.epsilon >= 1.0 / args.L:
        print(f"step size must be below 1/L = {1.0 / args.L:g}", file=sys.stderr)
        return 2
    res = verification.lowerbound_report(args.L, args.epsilon)
    print(json.dumps(res, indent=2))
    ok = res["exact_oracle_welfare"] <= 2.0 + 1e-9 and res["cost_scaled_welfare"] >= args.L / 2.0 - 1.0 - 1e-9
    return 0 if ok else 1


def _cmd_gen_instance(args) -> int:
    if args.random is not None:
        instance, costs = random_instance(args.random, args.seed)
    else:
        if not args.graph:
            print("gen-instance needs --random N or --graph FILE with --n and --s", file=sys.stderr)
            return 2
        graph = _load_graph(args.graph, args.seed)
        cfg = ExperimentConfig(n=args.n, s=args.s, instances=1, seed=args.seed)
        instance, costs = build_instance(graph, cfg, args.index)
    doc = {"instance": instance.to_json(), "costs": list(costs)}
    text = json.dumps(doc, indent=2)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote instance to {args.output}")
    else:
        print(text)
    return 0


def _cmd_fetch_dataset(args) -> int:
    import gzip
    import urllib.request

    target = Path(args.output)
    print(f"fetching {args.url} -> {target}")
    with urllib.request.urlopen(args.url) as resp:
        payload = resp.read()
    if args.url.endswith(".gz"):
        payload = gzip.decompress(payload)
    target.write_bytes(payload)
    print(f"wrote {len(payload)} bytes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procure", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run a mechanism x rule x instance matrix to CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="SNAP edge list path or 'synthetic'")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", help="CSV output path")
    p.add_argument("--no-timing", action="store_true", help="blank the wall-time column for byte-stable output")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--workers", type=int, default=None, help="parallel instance workers (output is identical)")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=sorted(verification.SUITES))
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("bench", help="runtime and oracle-query comparison")
    p.add_argument("--n", type=int, nargs="+", default=[100, 500, 2000])
    p.add_argument("--rules", nargs="+", default=["greedy-margin", "cost-scaled", "distorted"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="bench.csv")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("lowerbound", help="adversarial family under both demand oracles")
    p.add_argument("L", type=int)
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(fn=_cmd_lowerbound)

    p = sub.add_parser("gen-instance", help="emit an instance JSON with costs")
    p.add_argument("--random", type=int, default=None, help="random instance with N sets")
    p.add_argument("--graph", help="SNAP edge list to sample from")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(fn=_cmd_gen_instance)

    p = sub.add_parser("fetch-dataset", help="download an edge list (network access required)")
    p.add_argument("--url", default=WIKI_VOTE_URL)
    p.add_argument("--output", default="wiki-Vote.txt")
    p.set_defaults(fn=_cmd_fetch_dataset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
