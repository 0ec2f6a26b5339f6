#!/usr/bin/env python3
"""Density study: truncated convolution-series density versus the weighted
Monte Carlo histogram on an interior grid, with certified remainder bounds.

Usage: python3 scripts/run_density_study.py [--paths 200000] [--terms 2]
                                            [--out density.csv]
"""

import argparse
import os
import sys

from hbmc.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--terms", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", default="density.csv")
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    os.environ["HBMC_DENSITY__N_PATHS"] = str(args.paths)
    os.environ["HBMC_DENSITY__N_TERMS"] = str(args.terms)
    argv = ["density", "--seed", str(args.seed), "--workers",
            str(args.workers), "--out", args.out]
    if args.config:
        argv += ["--config", args.config]
    rc = cli_main(argv)
    print(f"wrote {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    sys.exit(main())
