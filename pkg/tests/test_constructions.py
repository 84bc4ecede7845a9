"""Pair groupoids, transformation groupoids and disjoint-union families."""

from fractions import Fraction

from hypothesis import given
from hypothesis import strategies as st

import oracles
from groupoid_lab.constructions import (
    FiniteMetricSpace,
    GroupAction,
    action_zn,
    family_union,
    graph_metric,
    pair_complete,
    pair_cycle,
    pair_groupoid,
    quotient_family,
    transformation_groupoid,
)
from groupoid_lab.core import saturate, validate
from groupoid_lab.expansion import Verdict, certify_expansion
from groupoid_lab.markov import build_kernel, cheeger

ZN_KAPPA = {4: Fraction(1, 3), 6: Fraction(2, 9), 8: Fraction(1, 6), 10: Fraction(2, 15), 12: Fraction(1, 9)}


@st.composite
def connected_graphs(draw, max_n=7):
    n = draw(st.integers(2, max_n))
    tree = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=n))
    return n, tree + [(a, b) for a, b in extra if a != b]


def test_one_point_gives_the_trivial_groupoid():
    inst = pair_complete(1)
    G = inst.groupoid
    assert G.n_elements == 1 and G.units == (0,) and validate(G).ok


def test_four_cycle_first_ball_decomposition():
    inst = pair_cycle(4)
    K = inst.ball_decomposition(1)
    assert len(K.elements) == 12
    assert K.unital and K.N - 1 <= 3
    assert K.pieces[K.unital_index].members == inst.groupoid.unit_set


def test_metric_axioms_are_enforced():
    try:
        FiniteMetricSpace(((0, 1, 5), (1, 0, 1), (5, 1, 0)))
    except ValueError as exc:
        assert "triangle" in str(exc)
    else:
        raise AssertionError("triangle inequality violation accepted")


@given(connected_graphs(), st.integers(1, 3), st.data())
def test_saturation_is_the_metric_neighbourhood(graph, L, data):
    n, edges = graph
    X = graph_metric(n, edges)
    inst = pair_groupoid(X)
    A = data.draw(st.frozensets(st.integers(0, n - 1), min_size=1))
    boundary = {x for x in range(n) if x not in A and min(X.dist[x][a] for a in A) <= L}
    assert saturate(inst.ball_decomposition(L), A) - A == boundary


def test_trivial_group_gives_units_only():
    inst = transformation_groupoid(GroupAction.from_generators([(0, 1, 2)]))
    assert inst.groupoid.n_elements == 3
    assert set(inst.groupoid.units) == set(range(3))


def test_rotation_saturation_adds_neighbouring_indices():
    inst = action_zn(8)
    K = inst.ball_decomposition(1)
    for A in [{0}, {2, 3}, {1, 5}]:
        assert saturate(K, A) == {(a + d) % 8 for a in A for d in (-1, 0, 1)}


def test_groupoid_expansion_matches_action_expansion():
    inst = action_zn(8)
    K = inst.ball_decomposition(1)
    moves = [tuple(range(8)), tuple((x + 1) % 8 for x in range(8)), tuple((x - 1) % 8 for x in range(8))]
    # the action side: μ(⋃_g gA ∖ A)/μ(A) minimised over μ(A) ≤ 1/2
    action_worst = min(
        Fraction(len({g[a] for g in moves for a in A} - A), len(A))
        for A in oracles.subsets(range(8)) if len(A) <= 4
    )
    assert action_worst == Fraction(1, 2)
    for C in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
        cert = certify_expansion(inst.space, None, K, C, exact_limit=8)
        assert (cert.verdict is Verdict.PROVEN) == (action_worst > C)


def test_rotation_family_cheeger_constants_decay():
    kappas = {}
    for n, expected in ZN_KAPPA.items():
        inst = action_zn(n)
        b = build_kernel(inst.space, None, inst.ball_decomposition(1))
        kappas[n] = cheeger(b).value
        assert kappas[n] == expected
    values = [kappas[n] for n in sorted(kappas)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_rotation_cheeger_constants_match_brute_force():
    for n in sorted(ZN_KAPPA):
        P = [[Fraction(1, 3) if (y - x) % n in (0, 1, n - 1) else Fraction(0) for y in range(n)] for x in range(n)]
        assert oracles.cheeger(P, [Fraction(1, n)] * n)[0] == ZN_KAPPA[n]


def test_single_point_quotient_is_trivially_expanding():
    (inst,) = quotient_family([[(0,)]])
    cert = certify_expansion(inst.space, None, inst.ball_decomposition(0), Fraction(1))
    assert cert.verdict is Verdict.PROVEN and cert.note == "no admissible set"


def test_union_of_one_block_keeps_the_tables():
    inst = pair_cycle(5)
    U = family_union([inst])
    assert U.groupoid.source == inst.groupoid.source
    assert dict(U.groupoid.compose) == dict(inst.groupoid.compose)
    assert U.blocks == ((0, 5),)


def test_union_never_joins_blocks():
    U = family_union([pair_cycle(4), pair_cycle(4)])
    K = U.ball_decomposition(1)
    for x, y in K.relation:
        assert (x < 4) == (y < 4)
    assert saturate(K, {0, 1, 2, 3}) == {0, 1, 2, 3}


def test_expander_family_shares_constants_blockwise():
    blocks = [pair_complete(n) for n in (4, 6, 8)]
    C = Fraction(1, 2)
    for b in blocks:
        cert = certify_expansion(b.space, None, b.ball_decomposition(1), C)
        assert cert.verdict is Verdict.PROVEN
        assert cert.ratio == oracles.worst_ratio(b, b.ball(1))[0]
    # per-block constants agree with the disjoint union restricted to each block
    U = family_union(blocks, normalize=True)
    K = U.ball_decomposition(1)
    for lo, hi in U.blocks:
        cert = certify_expansion(U.space, range(lo, hi), K, C)
        assert cert.verdict is Verdict.PROVEN


def test_quotient_family_builds_one_groupoid_per_quotient():
    fam = quotient_family([[(1, 2, 0)], [(1, 2, 3, 0)], [(1, 2, 3, 4, 0)]])
    assert [f.n_atoms for f in fam] == [3, 4, 5]
    assert all(validate(f.groupoid).ok for f in fam)
    assert all(f.space.probability for f in fam)
