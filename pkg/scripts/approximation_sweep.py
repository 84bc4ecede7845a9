"""Finite-propagation approximants of the averaging projection over an ε ladder.

Reports, per instance and ε, the structure level n, mixing exponent m,
Markov constant C_n, the a priori bound and the measured error ‖T − P‖.
"""

import argparse
from fractions import Fraction

from groupoid_lab.constructions import action_zn, pair_complete, pair_cycle, planted_pendant, two_cliques
from groupoid_lab.roe import InsufficientInstruments, approximate_averaging, check_propagation

INSTANCES = {
    "K8": lambda: pair_complete(8),
    "K16": lambda: pair_complete(16),
    "C10": lambda: pair_cycle(10),
    "Z8": lambda: action_zn(8),
    "pendant": planted_pendant,
    "two-cliques": two_cliques,
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", nargs="+", default=list(INSTANCES), choices=list(INSTANCES))
    ap.add_argument("--depth", type=int, default=4, help="ε runs over 1/10 .. 1/10^depth")
    args = ap.parse_args()
    print("instance  eps  n  m  C_n  a_priori  error  propagation")
    for name in args.instances:
        inst = INSTANCES[name]()
        for k in range(1, args.depth + 1):
            eps = Fraction(1, 10 ** k)
            try:
                r = approximate_averaging(inst, eps)
            except InsufficientInstruments as exc:
                print(name, eps, "-", "-", "-", "-", f"{exc.best:.3g}", "unavailable")
                continue
            print(name, eps, r.n, r.m, r.C_n, f"{r.a_priori:.3g}", f"{r.error:.3g}", bool(check_propagation(r.T, r.K)))


if __name__ == "__main__":
    main()
