"""Witness table for the graph on ℕ with edges n → n+1..n+k.

For each k and p, prints n_p, the hit measure at n_p, μ(A_p), the boundary
measure μ(r(B₁·A_p)) − μ(A_p) and whether the exact identities hold.
"""

import argparse

from groupoid_lab.graphgpd import branching_example


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--p", type=int, default=5)
    args = ap.parse_args()
    print("k  p  n_p  z0  mu(A_p)  boundary  identities")
    for k in args.k:
        M = (args.p + 1) * k + k + 3
        _, rep = branching_example(k, M, args.p)
        for r in rep.rows:
            print(k, r.p, r.n_p, r.z0, r.mu_A, r.boundary, all(r.identities.values()))
        print(f"# k={k}: boundaries decrease: {rep.boundaries_decrease}")


if __name__ == "__main__":
    main()
