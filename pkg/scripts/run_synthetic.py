"""Uniform vs leverage error tables for the two synthetic ReLU problems.

Writes ``<out>/synthetic_uniform.csv`` and ``<out>/synthetic_gaussian.csv``.
Use ``--n 100000`` for the full-size data set.
"""

import argparse
import logging
from pathlib import Path

from levneuron.harness import ExperimentConfig, emit_csv, run_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for problem in ("synthetic_uniform", "synthetic_gaussian"):
        cfg = ExperimentConfig(problem=problem, n=args.n, trials=args.trials, master_seed=args.seed, workers=args.workers)
        table = run_synthetic(cfg)
        emit_csv(table, out / f"{problem}.csv")
        lev, uni = table.medians("leverage"), table.medians("uniform")
        for m in sorted(lev):
            print(f"{problem:20s} m={m:4d} leverage {lev[m]:.4f} uniform {uni[m]:.4f}")


if __name__ == "__main__":
    main()
