#!/usr/bin/env python3
"""Finite-difference audit of every registered module case, report to a file."""
import argparse
import sys

from mocolsk.cli import main as mocolsk


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/gradcheck.txt")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    return mocolsk(["gradcheck", "--out", args.out, "--seed", str(args.seed)])


if __name__ == "__main__":
    sys.exit(main())
