#!/usr/bin/env python3
"""Desk-scale welfare benchmark over the coverage instances.

Sweeps n x s cells, runs the four allocation rules on every sampled
instance, writes the records CSV and prints the bucketed welfare summary.
Point --dataset at a SNAP edge list (see `procure fetch-dataset`) to run on
the real voting graph instead of the synthetic stand-in.
"""

import argparse

from procure.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default="synthetic")
    parser.add_argument("--output", default="experiment.csv")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    import json
    import tempfile

    config = {
        "dataset": args.dataset,
        "n": [100, 200, 500],
        "s": [1, 2, 4],
        "instances": 100,
        "seed": args.seed,
        "mechanisms": [
            "alloc:greedy-margin",
            "alloc:greedy-rate",
            "alloc:cost-scaled",
            "alloc:distorted",
        ],
        "output": args.output,
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(config, fh)
        path = fh.name
    return cli_main(["experiment", "--config", path])


if __name__ == "__main__":
    raise SystemExit(main())
