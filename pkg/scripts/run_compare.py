#!/usr/bin/env python3
"""Estimator-vs-oracle study: the Poisson-clock weighted estimator against
Euler-Maruyama, over a grid of drifts, payoffs and horizons.

Usage: python3 scripts/run_compare.py [--paths 100000] [--seed 0]
                                      [--workers 4] [--out compare.csv]
"""

import argparse
import os
import sys

from hbmc.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", default="compare.csv")
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    os.environ["HBMC_COMPARE__N_PATHS"] = str(args.paths)
    argv = ["compare", "--seed", str(args.seed), "--workers",
            str(args.workers), "--out", args.out]
    if args.config:
        argv += ["--config", args.config]
    rc = cli_main(argv)
    print(f"wrote {args.out} (exit {rc}; 0 means all z-scores within 3)")
    return rc


if __name__ == "__main__":
    sys.exit(main())
