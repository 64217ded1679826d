#!/usr/bin/env python3
"""Matched diameter-tail sweeps in d=2 and d=3 with exponent fits.

Runs the transport on fresh palm samples per trial, bins the anchored
origin-cell diameters, fits log(-log P) against log R, and prints the
slope contrast between the dimensions.  Outputs land in ./tail_out/.

Usage: python scripts/tail_contrast.py [--trials 500] [--levels 5] [--seed 808]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from aktalloc.cli import main as cli_main


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--margin", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=808)
    ap.add_argument("--out", default="tail_out")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in (2, 3):
        code = cli_main([
            "tail",
            "--d", str(d),
            "--levels", str(args.levels),
            "--trials", str(args.trials),
            "--margin", str(args.margin),
            "--seed", str(args.seed),
            "--out", str(out / f"tail_d{d}"),
        ])
        if code != 0:
            return code
    print(f"survival curves and fits written under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(run())
