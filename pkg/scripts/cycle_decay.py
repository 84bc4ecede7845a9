"""Worst first-ball expansion ratio and Cheeger constant of n-cycles as n grows.

Both decay like 1/n, so no single constant serves the whole family.
Writes a CSV with columns n, worst_ratio, half_arc, kappa, lambda.
"""

import argparse
import csv
import sys
from fractions import Fraction

from groupoid_lab.constructions import pair_cycle
from groupoid_lab.expansion import worst_ratio
from groupoid_lab.markov import build_kernel, cheeger, spectral_gap


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 6, 8, 10, 12, 14, 16])
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    rows = []
    for n in args.sizes:
        inst = pair_cycle(n)
        K = inst.ball_decomposition(1)
        _, ratio = worst_ratio(inst.space, K)
        b = build_kernel(inst.space, None, K)
        kappa = cheeger(b, exact_limit=max(n, 14)).value
        lam = spectral_gap(b).lam
        rows.append((n, ratio, Fraction(2, n // 2), kappa, f"{lam:.12f}"))
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out)
    w.writerow(["n", "worst_ratio", "half_arc", "kappa", "lambda"])
    w.writerows(rows)


if __name__ == "__main__":
    main()
