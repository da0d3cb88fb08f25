#!/usr/bin/env python3
"""Run config-sweep suites at desk scale, one comparison CSV per suite.

All suites share one synthesized dataset.  At the default 200 steps per case
this is a coffee-break job for a single suite and an overnight desk job for
all nine; the sweeps exercise the wiring and produce comparable numbers, they
do not reproduce full-scale orderings.
"""
import argparse
import sys
from pathlib import Path

from mocolsk.ablate import SUITES
from mocolsk.cli import main as mocolsk


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--root", default="runs/ablations")
    p.add_argument("--suite", action="append", choices=sorted(SUITES),
                   help="repeatable; default all suites")
    p.add_argument("--scale", type=int, default=4, choices=(2, 4, 8))
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--hr-size", type=int, default=64)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--base-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    root = Path(args.root)
    data = root / "data"
    rc = mocolsk([
        "synth", "--out", str(data), "--count", str(args.count),
        "--hr-size", str(args.hr_size), "--scale", str(args.scale),
        "--seed", str(args.seed),
    ])
    if rc:
        return rc

    for suite in args.suite or sorted(SUITES):
        rc = mocolsk([
            "ablate", "--suite", suite, "--out", str(root / suite),
            "--data", str(data), "--steps", str(args.steps),
            "--base-dim", str(args.base_dim), "--seed", str(args.seed),
        ])
        if rc:
            return rc
    print(f"done; suite CSVs under {root}/<suite>/suite_<suite>.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
