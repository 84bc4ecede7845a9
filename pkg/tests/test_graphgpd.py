"""Graph groupoids on path spaces: cylinder arithmetic, ball saturations and the ℕ-graph family."""

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from groupoid_lab.expansion import Verdict
from groupoid_lab.graphgpd import (
    CylinderUnion,
    DirectedGraph,
    InvalidPath,
    Path,
    WindowExceeded,
    b1_saturate,
    ball_decomposition_count,
    ball_pieces,
    ball_saturate_direct,
    bn_saturate,
    canonicalize,
    cylinder_measure_path,
    branching_example,
    branching_graph,
    expansion_check_cylinders,
    branching_family_quasilocal,
    family_accepts,
    graph_family,
    hit_measure,
    paths_from,
    recursion_holds,
    refine,
    witness_set,
)


def circulant5() -> DirectedGraph:
    """Five vertices, edges v → v+1 and v → v+2 (mod 5), uniform weights; every vertex is safe."""
    edges = tuple((v, (v + d) % 5) for v in range(5) for d in (1, 2))
    return DirectedGraph(frozenset(range(5)), edges, {v: Fraction(1, 5) for v in range(5)})


def visit_probability(k: int, j: int) -> Fraction:
    """Chance that the walk n → n+U{1..k} started at 0 ever lands on j."""
    t = [Fraction(1)] + [Fraction(0)] * j
    for n in range(1, j + 1):
        t[n] = sum((t[n - i] for i in range(1, k + 1) if n - i >= 0), Fraction(0)) / k
    return t[j]


def witness_measure_oracle(k: int, n_p: int) -> Fraction:
    """Paths from any m ≤ n_p that visit n_p and then take the edge to n_p+1."""
    return sum(Fraction(1, 2 ** (m + 1)) * visit_probability(k, n_p - m) for m in range(n_p + 1)) / k


@st.composite
def circulant_unions(draw):
    G = circulant5()
    pool = [p for v in range(5) for p in paths_from(G, v, 2)]
    return G, CylinderUnion.of(G, draw(st.lists(st.sampled_from(pool), min_size=1, max_size=5)))


# --- cylinder measures ---


def test_vertex_cylinder_measure():
    G = branching_graph(3, 12)
    for n in range(10):
        assert cylinder_measure_path(G, Path(n)) == Fraction(1, 2 ** (n + 1))


def test_path_cylinder_measure():
    k = 3
    G = branching_graph(k, 12)
    for p in paths_from(G, 2, 3):
        assert cylinder_measure_path(G, p) == Fraction(1, 2 ** 3 * k ** len(p))


def test_disjoint_cylinders_add():
    G = branching_graph(2, 10)
    A = CylinderUnion.of(G, [Path(1), Path(4)])
    assert A.measure == Fraction(1, 4) + Fraction(1, 32)


def test_broken_path_is_rejected():
    G = branching_graph(2, 10)
    with pytest.raises(InvalidPath):
        cylinder_measure_path(G, Path(0, (5,)))


def test_path_leaving_the_window_is_rejected():
    G = branching_graph(1, 4)
    with pytest.raises(WindowExceeded):
        CylinderUnion.of(G, [Path(3, (3,))])


@given(circulant_unions())
def test_refinement_preserves_measure(arg):
    G, A = arg
    for p in A.paths:
        assert sum(cylinder_measure_path(G, q) for q in refine(G, p)) == cylinder_measure_path(G, p)
        finer = (A.paths - {p}) | set(refine(G, p))
        assert CylinderUnion.of(G, finer) == A


@given(circulant_unions())
def test_canonical_form_is_idempotent_and_prefix_free(arg):
    G, A = arg
    assert canonicalize(G, A.paths) == A.paths
    for p in A.paths:
        assert not any(q != p and q.is_prefix_of(p) for q in A.paths)


# --- saturation by balls ---


def test_first_ball_grows_a_vertex_cylinder_on_the_line():
    G = branching_graph(1, 12)
    A = CylinderUnion.of(G, [Path(4)])
    S = b1_saturate(G, A)
    assert S.contains(Path(3)) and S.contains(Path(5)) and S.contains(Path(4))
    assert S.measure == Fraction(1, 16) + Fraction(1, 32) + Fraction(1, 64)


@given(circulant_unions())
def test_first_ball_is_unital_and_monotone(arg):
    G, A = arg
    S = b1_saturate(G, A)
    assert all(S.contains(p) for p in A.paths)
    assert S.measure >= A.measure
    assert bn_saturate(G, S, 1).measure >= S.measure


@given(circulant_unions())
def test_second_ball_is_the_first_ball_squared(arg):
    G, A = arg
    twice = b1_saturate(G, b1_saturate(G, A))
    assert bn_saturate(G, A, 2) == twice
    assert ball_saturate_direct(G, A, 2) == twice


@given(circulant_unions(), st.integers(0, 2), st.integers(0, 2))
def test_ball_saturations_compose(arg, n, m):
    G, A = arg
    assert bn_saturate(G, A, n + m) == bn_saturate(G, bn_saturate(G, A, n), m)


def test_full_space_is_fixed():
    G = circulant5()
    full = CylinderUnion.of(G, [Path(v) for v in range(5)])
    assert full.measure == 1
    assert b1_saturate(G, full) == full


def test_ball_decomposition_count_on_small_window():
    assert ball_decomposition_count(branching_graph(2, 8), 1) == 4


def test_family_generates_the_second_ball():
    G = circulant5()
    fam = graph_family(G, depth_cap=4)
    assert family_accepts(fam, ball_pieces(G, 2)) == []


# --- the ℕ-graph with k = 1 ---


def test_line_graph_expands_by_three_halves():
    G, rep = branching_example(1, 12)
    cert = rep.certificate
    assert cert.verdict is Verdict.PROVEN and cert.method == "exhaustive"
    assert cert.ratio == Fraction(3, 2)  # μ(r(B₁·A)) ≥ (3/2)μ(A), attained
    assert cert.C == Fraction(49, 100)


def test_line_graph_fails_strictly_at_one_half():
    G = branching_graph(1, 12)
    cert = expansion_check_cylinders(G, Fraction(1, 2), 0, depth_cap=10)
    assert cert.verdict is Verdict.REFUTED
    assert cert.witness.paths == {Path(0)} and cert.ratio == Fraction(3, 2)


def test_small_window_cannot_reach_the_depth():
    with pytest.raises(WindowExceeded):
        expansion_check_cylinders(branching_graph(1, 6), Fraction(1, 4), 0, depth_cap=10)


def test_full_space_is_not_admissible():
    G = branching_graph(1, 12)
    full = CylinderUnion.of(G, [Path(v) for v in range(12)])
    assert full.measure > Fraction(1, 2)
    base = expansion_check_cylinders(G, Fraction(1, 4), 0, depth_cap=10)
    with_full = expansion_check_cylinders(G, Fraction(1, 4), 0, depth_cap=10, extra=[full])
    assert with_full.checked == base.checked


# --- the ℕ-graph with k = 2 ---

K2_ROWS = [
    # p, n_p, μ(Z_{0,n_p}), μ(A_p)
    (1, 4, Fraction(11, 32), Fraction(21, 64)),
    (2, 6, Fraction(43, 128), Fraction(85, 256)),
    (3, 8, Fraction(171, 512), Fraction(341, 1024)),
    (4, 10, Fraction(683, 2048), Fraction(1365, 4096)),
    (5, 12, Fraction(2731, 8192), Fraction(5461, 16384)),
]


def test_hit_measures_match_the_walk():
    for k in (2, 3):
        z = hit_measure(k, 15)
        assert all(z[n] == visit_probability(k, n) / 2 for n in range(16))


def test_branching_witness_rows():
    _, rep = branching_example(2, 30, 5)
    got = [(r.p, r.n_p, r.z0, r.mu_A) for r in rep.rows]
    assert got == K2_ROWS
    for r in rep.rows:
        assert r.mu_A == witness_measure_oracle(2, r.n_p)
        assert r.z0 >= Fraction(1, 3)
        assert Fraction(1, 6) < r.mu_A <= Fraction(1, 2)
        assert r.boundary == Fraction(1, 2 ** (r.n_p + 2))
    assert rep.identities_hold and rep.boundaries_decrease


def test_branching_graph_is_refuted_at_one_sixth():
    _, rep = branching_example(2, 30, 5, C=Fraction(1, 100))
    cert = rep.certificate
    assert cert.verdict is Verdict.REFUTED and cert.alpha == Fraction(1, 6)
    assert cert.witness.measure >= Fraction(1, 6)
    # first row with boundary ratio ≤ 1/100 is p = 3
    assert cert.ratio == 1 + Fraction(1, 341)


def test_branching_window_must_fit():
    with pytest.raises(WindowExceeded):
        branching_example(2, 12, 5)


def test_hit_recursion():
    assert all(recursion_holds(k, 25) for k in (1, 2, 3, 4))


def test_branching_family_quasilocal_values_stay_large():
    G = branching_graph(2, 30)
    out = branching_family_quasilocal(2, 30, [1, 2, 3, 4], [1, 2, 3, 4], Fraction(1, 10))
    for L, w in out.items():
        assert w.value_squared == max(
            witness_measure_oracle(2, n) * (1 - bn_saturate(G, witness_set(G, n), L).measure)
            for n in (4, 6, 8, 10)
        )
        assert w.value > 0.4
