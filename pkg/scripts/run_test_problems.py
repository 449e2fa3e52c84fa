"""Uniform vs leverage error tables for the oscillator, heat and Burgers QoIs.

QoI values are cached under ``--cache-dir`` so reruns solve nothing.
"""

import argparse
import logging
from pathlib import Path

from levneuron.harness import TEST_PROBLEMS, ExperimentConfig, emit_csv, run_test_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("problems", nargs="*", default=list(TEST_PROBLEMS), choices=TEST_PROBLEMS)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--cache-dir", default=".qoi_cache")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for problem in args.problems:
        cfg = ExperimentConfig(
            problem=problem, trials=args.trials, master_seed=args.seed, workers=args.workers, cache_dir=args.cache_dir
        )
        table = run_test_problem(cfg)
        emit_csv(table, out / f"{problem}.csv")
        lev, uni = table.medians("leverage"), table.medians("uniform")
        for m in sorted(lev):
            print(f"{problem:10s} m={m:4d} leverage {lev[m]:.3e} uniform {uni[m]:.3e} ratio {uni[m] / lev[m]:.2f}")


if __name__ == "__main__":
    main()
