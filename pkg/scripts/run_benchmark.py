#!/usr/bin/env python3
"""Run the full synthetic benchmark grid and write the comparison tables.

Trains all (model, setup, shape) cells for both prediction steps on the
default 16-participant synthetic cohort and writes report.txt / report.csv /
confusions/ / run.json under --out.
"""

import argparse
import sys

from intent_bench.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--participants", type=int, default=16)
    parser.add_argument("--out", default="runs/benchmark")
    parser.add_argument("--grid", default="all", choices=["segment", "direction", "all"])
    args = parser.parse_args()
    return cli_main(
        [
            "run",
            "--synthetic",
            "--seed", str(args.seed),
            "--participants", str(args.participants),
            "--grid", args.grid,
            "--out", args.out,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
