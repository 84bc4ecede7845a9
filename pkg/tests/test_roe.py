"""Weighted operators: propagation, quasi-locality and finite-propagation approximants."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from groupoid_lab.constructions import graph_metric, pair_complete, pair_cycle, pair_groupoid, two_cliques
from groupoid_lab.core import AtomicMeasureSpace, saturate, units_decomposable
from groupoid_lab.expansion import ExpansionLevel, ExpansionParams
from groupoid_lab.roe import (
    HasZeroSet,
    InsufficientInstruments,
    NotNormalized,
    QuasiLocalLevel,
    WeightedOperator,
    a_priori_bound,
    approximate_averaging,
    approximate_projection,
    averaging_projection,
    change_measure_unitary,
    check_propagation,
    desk_verdicts,
    expansion_from_quasilocal,
    family_assemble,
    identity_operator,
    mixing_exponent,
    propagation_by_set_pairs,
    quasi_local_norm,
    quasilocal_from_expansion,
    rank_one,
)


@st.composite
def weighted_spaces(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    w = draw(st.lists(st.integers(1, 20), min_size=n, max_size=n))
    return AtomicMeasureSpace(tuple(Fraction(x) for x in w)).normalized()


@st.composite
def weighted_graphs(draw, max_n=7):
    space = draw(weighted_spaces(max_n))
    n = space.n_atoms
    tree = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=n))
    return pair_groupoid(graph_metric(n, tree + [(a, b) for a, b in extra if a != b]), space)


def brute_quasi_local(T, inst, K):
    full = frozenset(range(inst.n_atoms))
    return max(
        oracles.block_norm(T.matrix, T.weights, A, full - oracles.saturation(inst.groupoid, K.elements, A))
        for A in oracles.subsets(full)
    )


# --- the averaging projection ---


@given(weighted_spaces(), st.data())
def test_averaging_projection_identity(space, data):
    f = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=space.n_atoms, max_size=space.n_atoms)))
    g = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=space.n_atoms, max_size=space.n_atoms)))
    P = averaging_projection(space)
    one = np.ones(space.n_atoms)
    assert abs(P.inner(P.apply(f), g) - P.inner(f, one) * P.inner(one, g)) < 1e-12 * (1 + np.abs(f).sum() * np.abs(g).sum())


@given(weighted_spaces(), st.data())
def test_averaging_projection_is_an_orthogonal_projection(space, data):
    Y = data.draw(st.frozensets(st.integers(0, space.n_atoms - 1), min_size=1))
    P = averaging_projection(space, Y)
    assert np.allclose((P @ P).matrix, P.matrix, atol=1e-12)
    assert np.allclose(P.adjoint().matrix, P.matrix, atol=1e-12)
    assert P.norm() == pytest.approx(1.0, abs=1e-12)


def test_adjoint_is_weighted():
    space = AtomicMeasureSpace((Fraction(1, 4), Fraction(3, 4)))
    T = WeightedOperator.on(space, [[0.0, 1.0], [0.0, 0.0]])
    f, g = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    assert T.inner(T.apply(f), g) == pytest.approx(T.inner(f, T.adjoint().apply(g)))


# --- propagation ---


def test_diagonal_operator_has_unit_propagation():
    inst = pair_cycle(6)
    U = units_decomposable(inst.groupoid, inst.length)
    T = WeightedOperator.on(inst.space, np.diag(np.arange(1.0, 7.0)))
    assert check_propagation(T, U)
    assert propagation_by_set_pairs(T, U)


def test_averaging_projection_is_not_unit_propagated():
    inst = pair_cycle(6)
    U = units_decomposable(inst.groupoid, inst.length)
    P = averaging_projection(inst.space)
    rep = check_propagation(P, U)
    assert not rep and rep.counterexample is not None
    assert not propagation_by_set_pairs(P, U)
    assert check_propagation(P, inst.ball_decomposition(3))


@given(weighted_graphs(6), st.integers(0, 2 ** 32 - 1))
def test_entrywise_and_set_pair_propagation_agree(inst, seed):
    rng = np.random.default_rng(seed)
    K = inst.ball_decomposition(1)
    mask = rng.random((inst.n_atoms, inst.n_atoms)) < 0.5
    T = WeightedOperator.on(inst.space, np.where(mask, rng.standard_normal(mask.shape), 0.0))
    assert bool(check_propagation(T, K)) == propagation_by_set_pairs(T, K)


# --- quasi-locality ---


@given(weighted_graphs(6), st.integers(0, 2 ** 32 - 1))
def test_quasi_local_norm_matches_brute_force(inst, seed):
    K = inst.ball_decomposition(1)
    T = WeightedOperator.on(inst.space, np.random.default_rng(seed).standard_normal((inst.n_atoms,) * 2))
    assert quasi_local_norm(T, K).value == pytest.approx(brute_quasi_local(T, inst, K), rel=1e-9, abs=1e-12)


def test_quasi_local_norm_of_averaging_projection_on_cycle():
    inst = pair_cycle(10)
    K = inst.ball_decomposition(1)
    P = averaging_projection(inst.space)
    # ‖χ_A P χ_B‖ = √(μ(A)μ(B)), best at A = 4 consecutive atoms, B = the 4 beyond its neighbourhood
    expected = max(
        math.sqrt(len(A) * (10 - len(saturate(K, A)))) / 10 for A in oracles.subsets(range(10))
    )
    assert expected == pytest.approx(0.4)
    assert quasi_local_norm(P, K).value == pytest.approx(expected, abs=1e-12)


def test_quasi_local_norm_of_a_single_entry():
    inst = pair_cycle(8)
    K = inst.ball_decomposition(1)
    M = np.zeros((8, 8))
    M[0, 4] = 3.0
    T = WeightedOperator.on(inst.space, M)
    rep = quasi_local_norm(T, K)
    assert rep.value == pytest.approx(3.0)
    assert 0 in rep.A and 4 in rep.B


def test_finite_propagation_operator_has_zero_quasi_local_norm():
    inst = pair_cycle(8)
    K = inst.ball_decomposition(1)
    T = WeightedOperator.on(inst.space, np.eye(8) + np.roll(np.eye(8), 1, axis=1))
    assert quasi_local_norm(T, K).value == 0.0


def test_sampled_mode_is_a_lower_bound():
    inst = pair_cycle(12)
    K = inst.ball_decomposition(1)
    P = averaging_projection(inst.space)
    exact = quasi_local_norm(P, K, mode="exact").value
    sampled = quasi_local_norm(P, K, mode="sampled", budget=300, seed=3)
    assert sampled.method == "sampled" and sampled.value <= exact + 1e-12


# --- rank-one projections and measure changes ---


def test_rank_one_with_half_support():
    space = AtomicMeasureSpace.uniform(4)
    xi = np.array([math.sqrt(2), math.sqrt(2), 0.0, 0.0])
    pd = rank_one(space, xi)
    assert pd.Z == {2, 3} and pd.Y == (0, 1)
    assert np.allclose(pd.expand(pd.compress()), pd.P.matrix)
    assert np.allclose((pd.P @ pd.P).matrix, pd.P.matrix)
    assert pd.nu.weights == (Fraction(1, 2), Fraction(1, 2))


def test_constant_vector_gives_the_averaging_projection():
    space = AtomicMeasureSpace((Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)))
    pd = rank_one(space, np.ones(3))
    assert np.allclose(pd.P.matrix, averaging_projection(space).matrix)
    assert not pd.Z


def test_rank_one_needs_a_unit_vector():
    with pytest.raises(NotNormalized):
        rank_one(AtomicMeasureSpace.uniform(3), np.ones(3) * 2)


@given(weighted_spaces(6), st.data())
def test_measure_change_is_unitary_and_conjugates_the_projection(space, data):
    n = space.n_atoms
    raw = np.array(data.draw(st.lists(st.floats(0.1, 3), min_size=n, max_size=n)))
    signs = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=n, max_size=n)))
    xi = raw * signs
    xi = xi / math.sqrt(np.sum(xi ** 2 * space.float_weights()))
    chg = change_measure_unitary(space, xi)
    f = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=n, max_size=n)))
    # ‖Uf‖_μ = ‖f‖_ν
    assert np.sum(np.abs(xi * f) ** 2 * chg.mu) == pytest.approx(np.sum(np.abs(f) ** 2 * chg.nu), abs=1e-12)
    nu = AtomicMeasureSpace(tuple(Fraction(float(v)) for v in chg.nu)).normalized()
    P_nu = averaging_projection(nu)
    assert np.allclose(chg.ad(P_nu.matrix), rank_one(space, xi).P.matrix, atol=1e-9)


def test_measure_change_rejects_zeros():
    with pytest.raises(HasZeroSet):
        change_measure_unitary(AtomicMeasureSpace.uniform(2), np.array([1.0, 0.0]))


# --- approximants ---


def test_mixing_exponent_is_least():
    for N, theta, C, eps in [(3, 1, Fraction(1, 8), Fraction(1, 10)), (7, 2, Fraction(1, 3), Fraction(1, 1000))]:
        m = mixing_exponent(N, theta, C, eps)
        assert a_priori_bound(N, theta, C, m) < float(eps) / 2
        assert m == 0 or a_priori_bound(N, theta, C, m - 1) >= float(eps) / 2


def test_complete_graph_approximant():
    inst = pair_complete(8)
    eps = Fraction(1, 1000)
    res = approximate_averaging(inst, eps)
    assert res.error < float(eps)
    assert res.a_priori < float(eps) / 2
    assert res.error <= res.a_priori + res.tail + 1e-9
    assert check_propagation(res.T, res.K)
    assert res.T.matrix.shape == (8, 8)


def test_single_atom_approximant_is_exact():
    inst = pair_complete(1)
    res = approximate_averaging(inst, Fraction(1, 10))
    assert res.m == 0
    assert np.allclose(res.T.matrix, averaging_projection(inst.space).matrix)


def test_disconnected_space_has_no_approximant():
    with pytest.raises(InsufficientInstruments):
        approximate_averaging(two_cliques(), Fraction(1, 10))


def test_rank_one_approximant_on_support():
    inst = pair_complete(6)
    xi = np.array([1.0, 2.0, 1.0, 0.0, 1.0, 1.0])
    xi = xi / math.sqrt(np.sum(xi ** 2 * inst.space.float_weights()))
    res = approximate_projection(inst, Fraction(1, 100), xi=xi)
    assert res.error < 0.01
    assert check_propagation(res.T, res.K)
    assert not res.T.matrix[3].any() and not res.T.matrix[:, 3].any()


# --- quasi-locality versus expansion ---


def test_expansion_to_quasilocality_power():
    inst = pair_complete(4)
    K = inst.ball_decomposition(1)
    params = ExpansionParams((ExpansionLevel(Fraction(1, 4), Fraction(1), K),))
    lv = quasilocal_from_expansion(params, Fraction(1, 4))
    # (1+1)^n/4 > 1/2 first at n = 2
    assert lv.power == 2
    assert lv.epsilon == Fraction(1, 2)


def test_quasilocality_to_expansion_levels():
    K = pair_complete(4).ball_decomposition(1)
    params = expansion_from_quasilocal([QuasiLocalLevel(Fraction(1, 4), K), QuasiLocalLevel(Fraction(1, 2), K)])
    assert [(l.alpha, l.C) for l in params.levels] == [(Fraction(1, 4), Fraction(1, 2))]


# --- families and desk verdicts ---


def test_family_assembly_is_block_diagonal():
    a, b = pair_complete(3), pair_cycle(4)
    T = family_assemble([averaging_projection(a.space), identity_operator(b.space)])
    assert T.matrix.shape == (7, 7)
    assert not T.matrix[:3, 3:].any() and not T.matrix[3:, :3].any()
    assert T.norm() == pytest.approx(1.0)


def test_desk_verdicts_agree_on_an_expander():
    v = desk_verdicts(pair_complete(6), ladder=(Fraction(1, 10), Fraction(1, 100)))
    assert v.expanding and v.quasilocal and v.approximable and v.agree


def test_desk_verdicts_agree_on_a_disconnected_space():
    v = desk_verdicts(two_cliques(), ladder=(Fraction(1, 10),))
    assert not v.expanding and not v.quasilocal and not v.approximable and v.agree
