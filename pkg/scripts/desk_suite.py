"""Three verdicts per small instance: asymptotic expansion, quasi-locality of P and approximability."""

import argparse
from fractions import Fraction

from groupoid_lab.constructions import action_zn, family_union, pair_complete, pair_cycle, pair_path, planted_pendant, two_cliques
from groupoid_lab.roe import EPSILON_LADDER, desk_verdicts


def suite():
    return [
        pair_complete(6),
        pair_complete(10),
        pair_cycle(8),
        pair_cycle(10),
        action_zn(8),
        pair_path(5),
        two_cliques(4),
        two_cliques(5),
        family_union([pair_cycle(4), pair_cycle(4)], normalize=True, name="two-4-cycles"),
        planted_pendant(8),
        planted_pendant(6, Fraction(1, 100)),
    ]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=len(EPSILON_LADDER), help="number of ε ladder rungs")
    args = ap.parse_args()
    ladder = EPSILON_LADDER[: args.depth]
    print("instance  atoms  expanding  quasilocal  approximable  agree")
    for inst in suite():
        v = desk_verdicts(inst, ladder)
        print(inst.name, inst.n_atoms, v.expanding, v.quasilocal, v.approximable, v.agree)


if __name__ == "__main__":
    main()
