#!/usr/bin/env python3
"""Tabulate the heat kernels on a (t, r) grid and cross-check the two
independent representations (integral vs oscillatory) of each.

Usage: python3 scripts/run_kernel_table.py [--out kernels.csv]
"""

import argparse
import sys

from hbmc.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="kernels.csv")
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    argv = ["kernels", "--out", args.out]
    if args.config:
        argv += ["--config", args.config]
    rc = cli_main(argv)
    print(f"wrote {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    sys.exit(main())
