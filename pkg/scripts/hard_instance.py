"""Hypercube construction showing why purely relative error needs 2^d queries.

For each d, checks relu(X w_i) = e_i for every vertex and prints the exact
probability that s = 4d distinct uniform queries miss the one informative row.
"""

import argparse

from levneuron.harness import indistinguishability, verify_hard_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-d", type=int, default=10)
    args = ap.parse_args()
    print("d,rows,verified,samples,miss_probability,miss_probability_iid")
    for d in range(1, args.max_d + 1):
        rep = indistinguishability(d)
        print(f"{d},{2**d},{verify_hard_instance(d)},{rep.samples},{rep.miss_probability},{rep.miss_probability_iid:.6f}")


if __name__ == "__main__":
    main()
