"""Sampled (k, omega) locations for the oscillator problem, both methods.

Writes ``<out>/samples_<method>.csv`` for scatter plots and prints the share
of samples in the outer 10% border band.
"""

import argparse
from pathlib import Path

import numpy as np

from levneuron.harness import border_band_fraction, sample_location_dump
from levneuron.qoi_sims import PROBLEM_RECTS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="oscillator", choices=sorted(PROBLEM_RECTS))
    ap.add_argument("-m", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for method in ("uniform", "leverage"):
        path = out / f"samples_{args.problem}_{method}.csv"
        sample_location_dump(args.problem, method, args.m, args.seed, path=path)
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        share = border_band_fraction(pts, PROBLEM_RECTS[args.problem])
        print(f"{method:8s} border-band share {share:.3f} -> {path}")


if __name__ == "__main__":
    main()
