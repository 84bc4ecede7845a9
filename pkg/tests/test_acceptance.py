"""Acceptance criteria 1 to 11, each at its stated tolerance and time budget.

Run under pytest, or directly with ``python tests/test_acceptance.py`` for a
one-line PASS/FAIL summary per criterion.
"""

from __future__ import annotations

import math
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from groupoid_lab.constructions import (  # noqa: E402
    action_zn,
    family_union,
    graph_metric,
    pair_complete,
    pair_cycle,
    pair_groupoid,
    pair_path,
    planted_pendant,
    two_cliques,
)
from groupoid_lab.core import AtomicMeasureSpace  # noqa: E402
from groupoid_lab.expansion import (  # noqa: E402
    Verdict,
    ball_schedule,
    certify_expansion,
    maximal_folner,
    structure_exhaustion,
    worst_ratio,
)
from groupoid_lab.graphgpd import (  # noqa: E402
    ball_decomposition_count,
    branching_example,
    branching_graph,
    expansion_check_cylinders,
    branching_family_quasilocal,
)
from groupoid_lab.markov import (  # noqa: E402
    build_kernel,
    kernel_cheeger,
    kernel_spectrum,
    random_reversible_kernel,
    reversing_measure_bounds,
)
from groupoid_lab.roe import (  # noqa: E402
    EPSILON_LADDER,
    a_priori_bound,
    approximate_averaging,
    averaging_projection,
    check_propagation,
    desk_verdicts,
    family_assemble,
    quasi_local_norm,
)


def weighted_graph(n: int, extra: int, seed: int):
    rng = random.Random(seed)
    edges = [(rng.randrange(i), i) for i in range(1, n)]
    edges += [tuple(rng.sample(range(n), 2)) for _ in range(extra)]
    space = AtomicMeasureSpace(tuple(Fraction(rng.randint(1, 9)) for _ in range(n))).normalized()
    return pair_groupoid(graph_metric(n, edges), space, name=f"weighted-{n}-{seed}")


def small_suite():
    """Instances with at most 12 atoms used by several criteria."""
    return [
        pair_complete(6),
        pair_complete(8),
        pair_cycle(8),
        pair_cycle(12),
        action_zn(10),
        pair_path(7),
        planted_pendant(8),
        two_cliques(4),
        weighted_graph(9, 4, 1),
        weighted_graph(12, 6, 2),
    ]


# --- criteria ----------------------------------------------------------------------------------


def sandwich():
    """κ²/2 ≤ 1−λ+1e−9 and 1−λ ≤ 2κ+1e−9 on 100 seeded reversible kernels."""
    rng = np.random.default_rng(20240601)
    for trial in range(100):
        n = int(rng.integers(2, 13))
        P, m = random_reversible_kernel(n, rng)
        kappa, _ = kernel_cheeger(P, m)
        lam = kernel_spectrum(P, m)
        if abs(lam - oracles.second_eigenvalue(P, m)) > 1e-10:
            return False, f"eigenvalue mismatch at trial {trial}"
        if not (kappa ** 2 / 2 <= 1 - lam + 1e-9 and 1 - lam <= 2 * kappa + 1e-9):
            return False, f"sandwich fails at trial {trial}: κ={kappa}, λ={lam}"
    return True, "100 kernels"


def reversing_measure():
    """μ(A) ≤ μ̃(A) ≤ N√(μ(A)μ(Y)) on every subset, slack ≥ −1e−20."""
    count = 0
    for inst in small_suite():
        b = build_kernel(inst.space, None, inst.ball_decomposition(1))
        for A in oracles.subsets(range(inst.n_atoms)):
            lo, hi = reversing_measure_bounds(b, A)
            count += 1
            if lo < -1e-20 or hi < -1e-20:
                return False, f"{inst.name}: A={sorted(A)} slacks {lo}, {hi}"
    return True, f"{count} subsets"


def averaging_identity():
    """‖χ_A P χ_B‖ = √(μ(A)μ(B)) within 1e−12 on 50 random pairs per instance."""
    rng = random.Random(7)
    worst = 0.0
    for inst in small_suite():
        space = inst.space.normalized()
        P = averaging_projection(space)
        n = space.n_atoms
        for _ in range(50):
            A = [x for x in range(n) if rng.random() < 0.5] or [0]
            B = [x for x in range(n) if rng.random() < 0.5] or [n - 1]
            expected = math.sqrt(float(space.measure(A) * space.measure(B)))
            worst = max(worst, abs(P.block_norm(A, B) - expected))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def projection_approximation():
    """K₈ and K₁₆ at ε = 1e−1..1e−4: error < ε, propagation, a priori bound < ε/2."""
    for n in (8, 16):
        inst = pair_complete(n)
        for k in range(1, 5):
            eps = Fraction(1, 10 ** k)
            res = approximate_averaging(inst, eps)
            bound = a_priori_bound(res.N_n, res.theta, res.C_n, res.m)
            if not (res.error < float(eps) and check_propagation(res.T, res.K) and bound < float(eps) / 2):
                return False, f"K{n} at ε={eps}: error {res.error}, bound {float(bound)}"
    return True, "8 runs"


def desk_equivalence():
    """Expansion, quasi-locality and approximability verdicts agree on the ≤ 10-atom suite."""
    suite = [
        pair_complete(6),
        pair_complete(10),
        pair_cycle(8),
        pair_cycle(10),
        action_zn(8),
        pair_path(5),
        two_cliques(4),
        two_cliques(5),
        family_union([pair_cycle(4), pair_cycle(4)], normalize=True),
        planted_pendant(8),
        planted_pendant(6, Fraction(1, 100)),
    ]
    verdicts = []
    for inst in suite:
        v = desk_verdicts(inst)
        if not v.agree:
            return False, f"{inst.name}: {v.expanding}, {v.quasilocal}, {v.approximable}"
        verdicts.append(v.expanding)
    return True, f"{sum(verdicts)} expanding, {len(verdicts) - sum(verdicts)} not"


def structure():
    """Domains Y_n on the pendant: exact measure bound, C/2 re-certification, RN ratios in [1/θ, θ]."""
    inst = planted_pendant()
    C = Fraction(1, 4)
    space = inst.space
    w = space.weights
    G = inst.groupoid
    for d in structure_exhaustion(inst, ball_schedule(inst), C, 3):
        n = d.n
        bound = (1 - C / ((4 + 2 * C) * (n + 1))) * Fraction(n, n + 1)
        if not space.measure(d.Y) > bound:
            return False, f"measure bound at n={n}"
        if len(d.Y) <= 14:
            ratio, _ = oracles.worst_ratio(inst, d.K.elements, d.Y)
            if not ratio > C / 2 or d.certificate.verdict is not Verdict.PROVEN:
                return False, f"re-certification at n={n}: ratio {ratio}"
        for g in d.K.elements:
            x, y = G.source[g], G.range[g]
            if x in d.Y and y in d.Y and not (1 / d.theta <= w[y] / w[x] <= d.theta):
                return False, f"RN ratio at n={n}"
    return True, "n = 1..3"


def line_graph():
    """k=1, M=12, depth ≤ 10: μ(r(B₁·A)) ≥ (3/2)μ(A) for every union with μ(A) ≤ 1/2."""
    _, rep = branching_example(1, 12, depth_cap=10)
    cert = rep.certificate
    ok = cert.verdict is Verdict.PROVEN and cert.witness is None and cert.ratio >= Fraction(3, 2)
    strict = expansion_check_cylinders(branching_graph(1, 12), Fraction(1, 2), 0, depth_cap=10)
    # the bound is attained, so only the non-strict inequality holds
    ok = ok and strict.ratio == Fraction(3, 2)
    return ok, f"{cert.checked} unions, least ratio {cert.ratio}"


def branching_witnesses():
    """k=2, M=30, p=1..5: exact witness identities and decreasing boundaries."""
    _, rep = branching_example(2, 30, 5)
    for r in rep.rows:
        ok = (
            r.z0 >= Fraction(1, 3)
            and Fraction(1, 6) < r.mu_A <= Fraction(1, 2)
            and r.saturated - r.mu_A == Fraction(1, 2 ** (r.n_p + 2))
        )
        if not ok:
            return False, f"row p={r.p}"
    return rep.boundaries_decrease, ", ".join(f"n_{r.p}={r.n_p}" for r in rep.rows)


def cycles():
    """n-cycles, n = 8, 12, 16: exact worst ratio is the half-arc value 4/n, matching brute force."""
    for n in (8, 12, 16):
        inst = pair_cycle(n)
        K = inst.ball_decomposition(1)
        _, r = worst_ratio(inst.space, K)
        ref, _ = oracles.worst_ratio(inst, K.elements)
        if not (r == ref == Fraction(2, n // 2)):
            return False, f"n={n}: {r} vs {ref}"
    return True, "4/n at n = 8, 12, 16"


def folner_duality():
    """certify_expansion Proven ⇔ maximal Følner set empty; nonempty sets pass the post-check."""
    cases = 0
    for inst in small_suite():
        K = inst.ball_decomposition(1)
        for eps in (Fraction(1, 10), Fraction(1, 4), Fraction(1, 2), Fraction(1)):
            proven = certify_expansion(inst.space, None, K, eps, exact_limit=12).verdict is Verdict.PROVEN
            fol = maximal_folner(inst.space, range(inst.n_atoms), K, eps, exact_limit=12)
            if proven != (not fol.F):
                return False, f"{inst.name} at ε={eps}"
            if fol.F and not fol.post_check:
                return False, f"{inst.name} post-check at ε={eps}"
            cases += 1
    return True, f"{cases} cases"


def family_behaviour():
    """Two expander blocks are quasi-local together; the k=2 block family fails at every (N, L)."""
    blocks = [pair_complete(8), pair_complete(8)]
    P = family_assemble([averaging_projection(b.space) for b in blocks])
    U = family_union(blocks)
    K = U.ball_decomposition(1)
    value = quasi_local_norm(P, K).value
    if not all(value < float(e) for e in EPSILON_LADDER):
        return False, f"expander family value {value}"
    lengths = [1, 2, 3, 4]
    out = branching_family_quasilocal(2, 30, [1, 2, 3, 4], lengths, EPSILON_LADDER[0])
    G = branching_graph(2, 30)
    for L in lengths:
        if not all(out[L].value_squared >= e * e for e in EPSILON_LADDER):
            return False, f"L={L} (N={ball_decomposition_count(G, L)}) value {out[L].value}"
    return True, "expanders 0, k=2 family ≥ " + f"{min(w.value for w in out.values()):.3f}"


CRITERIA = [
    (1, "Cheeger–spectral sandwich", 30, sandwich),
    (2, "reversing-measure bounds", 10, reversing_measure),
    (3, "averaging-projection identity", 5, averaging_identity),
    (4, "projection approximation", 60, projection_approximation),
    (5, "desk-scale equivalence", 300, desk_equivalence),
    (6, "structure exhaustion", 120, structure),
    (7, "line graph expands", 120, line_graph),
    (8, "branching graph witnesses", 60, branching_witnesses),
    (9, "cycle family non-expansion", 60, cycles),
    (10, "Følner duality", 120, folner_duality),
    (11, "family behaviour", 120, family_behaviour),
]


def run_criterion(fn, budget):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # an error is reported as a failure line
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    if elapsed > budget:
        ok, detail = False, f"{detail}; over budget"
    return ok, detail, elapsed


def line(number, title, ok, detail, elapsed, budget):
    return f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title} ({elapsed:.1f}s of {budget}s): {detail}"


@pytest.mark.parametrize("number,title,budget,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, budget, fn, capsys):
    ok, detail, elapsed = run_criterion(fn, budget)
    with capsys.disabled():
        print("\n" + line(number, title, ok, detail, elapsed, budget))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, title, budget, fn in CRITERIA:
        ok, detail, elapsed = run_criterion(fn, budget)
        failed += not ok
        print(line(number, title, ok, detail, elapsed, budget), flush=True)
    sys.exit(1 if failed else 0)
