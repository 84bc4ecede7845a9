"""Weighted operators on L²(atoms, μ): propagation, quasi-locality and projection approximants."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy.linalg import block_diag

from . import _scan
from .core import (
    AtomicMeasureSpace,
    DecomposableSet,
    MeasuredGroupoid,
    as_fraction,
    power_elements,
    reduction,
    unital_symmetric_decomposition,
)
from .expansion import (
    DEFAULT_EXACT_LIMIT,
    DegenerateDomain,
    ExpansionLevel,
    ExpansionParams,
    MissingLevel,
    StructureError,
    Verdict,
    ball_schedule,
    power_exponent,
    structure_exhaustion,
)
from .markov import build_kernel, cheeger, kernel_spectrum, markov_domain_check, sqrt_upper

EPSILON_LADDER = tuple(Fraction(1, 10**k) for k in range(1, 7))
MATRIX_POWER_LIMIT = 4096
UNIT_TOL = 1e-12


class NotNormalized(ValueError):
    pass


class HasZeroSet(ValueError):
    pass


class InsufficientInstruments(RuntimeError):
    def __init__(self, best: float, reason: str = ""):
        super().__init__(f"cannot reach the requested accuracy (best achievable {best:.3g}) {reason}".strip())
        self.best = best
        self.reason = reason


# --- operators ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    """A matrix acting on functions of the atoms with ⟨f,g⟩ = Σ f·conj(g)·μ."""

    matrix: np.ndarray
    weights: np.ndarray

    @classmethod
    def on(cls, space: AtomicMeasureSpace, matrix) -> "WeightedOperator":
        return cls(np.asarray(matrix), space.float_weights())

    @property
    def n(self) -> int:
        return len(self.weights)

    def symmetrized(self) -> np.ndarray:
        """D^{1/2}·T·D^{-1/2}, whose plain operator norm is the weighted norm of T."""
        d = np.sqrt(self.weights)
        return d[:, None] * self.matrix / d[None, :]

    def norm(self) -> float:
        if self.matrix.size == 0:
            return 0.0
        return float(np.linalg.norm(self.symmetrized(), 2))

    def adjoint(self) -> "WeightedOperator":
        w = self.weights
        return WeightedOperator(np.conj(self.matrix).T * w[None, :] / w[:, None], w)

    def inner(self, f, g) -> complex:
        return complex(np.sum(np.asarray(f) * np.conj(g) * self.weights))

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f)

    def __matmul__(self, other: "WeightedOperator") -> "WeightedOperator":
        return WeightedOperator(self.matrix @ other.matrix, self.weights)

    def __sub__(self, other: "WeightedOperator") -> "WeightedOperator":
        return WeightedOperator(self.matrix - other.matrix, self.weights)

    def block_norm(self, A: Sequence[int], B: Sequence[int]) -> float:
        """‖χ_A T χ_B‖."""
        A, B = list(A), list(B)
        if not A or not B:
            return 0.0
        d = np.sqrt(self.weights)
        M = d[A][:, None] * self.matrix[np.ix_(A, B)] / d[B][None, :]
        return float(np.linalg.norm(M, 2))


def identity_operator(space: AtomicMeasureSpace) -> WeightedOperator:
    return WeightedOperator.on(space, np.eye(space.n_atoms))


# --- propagation ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PropagationReport:
    ok: bool
    counterexample: tuple[int, int] | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_propagation(T: WeightedOperator, K: DecomposableSet, tol: float = 0.0) -> PropagationReport:
    """T[x,y] must vanish whenever x ∉ r(K·{y})."""
    nbr = K.neighbor_masks
    for x, y in zip(*np.nonzero(np.abs(T.matrix) > tol)):
        if not nbr[int(y)] >> int(x) & 1:
            return PropagationReport(False, (int(x), int(y)))
    return PropagationReport(True)


def propagation_by_set_pairs(T: WeightedOperator, K: DecomposableSet, tol: float = 0.0) -> bool:
    """Set-pair form: χ_A T χ_B = 0 for every A, B with r(K·A) ∩ B = ∅ (exhaustive)."""
    scan = _scan.SubsetScan(range(T.n), [Fraction(1)] * T.n, K.neighbor_masks)
    sat = scan.saturation_table()
    full = scan.full
    nz = np.abs(T.matrix) > tol
    for a in range(1, 1 << T.n):
        A = _scan.bits(a)
        comp = full & ~int(sat[a])
        for b in _submasks(comp):
            if nz[np.ix_(A, _scan.bits(b))].any():
                return False
    return True


def _submasks(mask: int):
    sub = mask
    while sub:
        yield sub
        sub = (sub - 1) & mask


# --- quasi-locality --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuasiLocalReport:
    value: float
    method: str  # "exact" or "sampled" (a lower bound)
    A: frozenset[int] = frozenset()
    B: frozenset[int] = frozenset()
    samples: int = 0


def _closed_pair(nbr, full, sat_mask):
    """Largest A with r(K·A) ⊆ sat_mask, and B = complement of r(K·A)."""
    outside = full & ~sat_mask
    A = 0
    for x, m in enumerate(nbr):
        if not m & outside:
            A |= 1 << x
    s = 0
    for x in _scan.bits(A):
        s |= nbr[x]
    return A, full & ~s


def quasi_local_norm(T: WeightedOperator, K: DecomposableSet, mode: str = "auto",
                     exact_limit: int = DEFAULT_EXACT_LIMIT, budget: int = 2000, seed: int = 0) -> QuasiLocalReport:
    """sup ‖χ_A T χ_B‖ over A with B the complement of r(K·A)."""
    n = T.n
    nbr = K.neighbor_masks
    full = (1 << n) - 1
    if mode == "auto":
        mode = "exact" if n <= exact_limit else "sampled"
    if mode == "exact":
        scan = _scan.SubsetScan(range(n), [Fraction(1)] * n, nbr)
        sats = set(int(s) for s in np.unique(scan.saturation_table()[1:]))
        pairs = {_closed_pair(nbr, full, s) for s in sats}
        samples = len(pairs)
    else:
        rng = random.Random(seed)
        pairs = set()
        for _ in range(budget):
            a = rng.getrandbits(n) or 1
            s = 0
            for x in _scan.bits(a):
                s |= nbr[x]
            pairs.add(_closed_pair(nbr, full, s))
        samples = budget
    best = (0.0, 0, 0)
    for a, b in sorted(pairs, key=lambda p: (_scan.bits(p[0]), _scan.bits(p[1]))):
        v = T.block_norm(_scan.bits(a), _scan.bits(b))
        if v > best[0] * (1 + 1e-12) + 1e-300:
            best = (v, a, b)
    v, a, b = best
    return QuasiLocalReport(v, mode, frozenset(_scan.bits(a)), frozenset(_scan.bits(b)), samples)


# --- projections --------------------------------------------------------------------------------


def averaging_projection(space: AtomicMeasureSpace, Y: Iterable[int] | None = None) -> WeightedOperator:
    """P_Y f = (⟨f, χ_Y⟩/μ(Y))·χ_Y."""
    Y = sorted(range(space.n_atoms) if Y is None else set(Y))
    mY = space.measure(Y)
    if mY == 0:
        raise DegenerateDomain("Y has measure zero")
    w = space.float_weights()
    P = np.zeros((space.n_atoms, space.n_atoms))
    P[np.ix_(Y, Y)] = np.broadcast_to(w[Y] / float(mY), (len(Y), len(Y)))
    return WeightedOperator(P, w)


@dataclass(frozen=True, eq=False)
class ProjectionData:
    xi: np.ndarray
    P: WeightedOperator
    nu: AtomicMeasureSpace  # |ξ|²μ on the support, in support order
    Z: frozenset[int]
    Y: tuple[int, ...]
    Q: np.ndarray  # inclusion L²(Y) → L²(atoms)

    def compress(self) -> np.ndarray:
        """Q*PQ as a matrix on the support."""
        return self.P.matrix[np.ix_(self.Y, self.Y)]

    def expand(self, M: np.ndarray) -> np.ndarray:
        """Q·M·Q* for a matrix on the support."""
        return self.Q @ M @ self.Q.T


def weighted_norm(space: AtomicMeasureSpace, xi) -> float:
    return float(np.sqrt(np.sum(np.abs(xi) ** 2 * space.float_weights())))


def rank_one(space: AtomicMeasureSpace, xi) -> ProjectionData:
    xi = np.asarray(xi)
    if abs(weighted_norm(space, xi) - 1) > UNIT_TOL:
        raise NotNormalized(f"‖ξ‖ = {weighted_norm(space, xi)}")
    w = space.float_weights()
    P = WeightedOperator(np.outer(xi, np.conj(xi)) * w[None, :], w)
    Y = tuple(int(x) for x in np.flatnonzero(xi != 0))
    Z = frozenset(range(space.n_atoms)) - set(Y)
    Q = np.zeros((space.n_atoms, len(Y)))
    Q[list(Y), range(len(Y))] = 1.0
    nu = AtomicMeasureSpace(tuple(Fraction(float(abs(xi[x]) ** 2)) * space.weights[x] for x in Y)).normalized()
    return ProjectionData(xi, P, nu, Z, Y, Q)


@dataclass(frozen=True, eq=False)
class MeasureChange:
    """U: L²(ν) → L²(μ), f ↦ f·ξ, for nowhere-zero ξ with ν = |ξ|²μ."""

    xi: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    @property
    def U(self) -> np.ndarray:
        return np.diag(self.xi)

    @property
    def U_star(self) -> np.ndarray:
        return np.diag(1 / self.xi)

    def ad(self, T: np.ndarray) -> np.ndarray:
        """U·T·U* as a matrix on L²(μ)."""
        return self.xi[:, None] * T / self.xi[None, :]

    def ad_operator(self, T: WeightedOperator) -> WeightedOperator:
        return WeightedOperator(self.ad(T.matrix), self.mu)


def change_measure_unitary(space: AtomicMeasureSpace, xi) -> MeasureChange:
    xi = np.asarray(xi)
    if np.any(xi == 0):
        raise HasZeroSet("ξ vanishes somewhere; reduce to its support first")
    mu = space.float_weights()
    return MeasureChange(xi, mu, np.abs(xi) ** 2 * mu)


# --- projection approximation -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ApproximationResult:
    T: WeightedOperator
    K: DecomposableSet  # declared propagation set
    epsilon: Fraction
    n: int
    m: int
    C_n: Fraction
    N_n: int
    L: Fraction  # m·L_n
    theta: Fraction
    a_priori: float  # N√θ(1−C_n²/4)^m
    tail: float  # √μ(atoms∖Y_n)
    error: float  # measured ‖T − P‖
    Y: frozenset[int]

    @property
    def N_bound(self) -> tuple[int, int]:
        """Piece bound N_n^m in exponent form."""
        return (self.N_n, self.m)


_MP = mpmath.MPContext()
_MP.prec = 128


def a_priori_bound(N: int, theta, C, m: int):
    """N√θ(1−C²/4)^m at 128-bit precision."""
    C = as_fraction(C)
    q = _MP.log1p(-_MP.mpf(C.numerator) ** 2 / (4 * _MP.mpf(C.denominator) ** 2))
    return N * _MP.sqrt(_MP.mpf(as_fraction(theta).numerator) / as_fraction(theta).denominator) * _MP.exp(m * q)


def mixing_exponent(N: int, theta, C, eps) -> int:
    """Least m with N√θ(1−C²/4)^m < ε/2."""
    eps = as_fraction(eps)
    half = _MP.mpf(eps.numerator) / (2 * eps.denominator)
    C = as_fraction(C)
    q = _MP.log1p(-_MP.mpf(C.numerator) ** 2 / (4 * _MP.mpf(C.denominator) ** 2))
    base = a_priori_bound(N, theta, C, 0)
    m = max(0, int(_MP.ceil(_MP.log(half / base) / q)) - 1)
    while a_priori_bound(N, theta, C, m) >= half:
        m += 1
    while m > 0 and a_priori_bound(N, theta, C, m - 1) < half:
        m -= 1
    return m


def lazy_power(W: np.ndarray, mu_t: np.ndarray, m: int) -> np.ndarray:
    """W^m for a kernel reversible w.r.t. mu_t.

    Small exponents use repeated squaring; large ones split off the stationary
    projection and raise the rest through an eigendecomposition.
    """
    if m <= MATRIX_POWER_LIMIT:
        return np.linalg.matrix_power(W, m)
    d = np.sqrt(mu_t)
    S = d[:, None] * W / d[None, :]
    S = (S + S.T) / 2
    v = d / np.linalg.norm(d)
    u, _, _ = np.linalg.svd(v[:, None], full_matrices=True)
    Qc = u[:, 1:]
    lam, V = np.linalg.eigh(Qc.T @ S @ Qc)
    R = (Qc @ V) * np.clip(lam, 0.0, 1.0) ** m @ (Qc @ V).T
    stationary = np.broadcast_to(mu_t / mu_t.sum(), W.shape)
    return stationary + R / d[:, None] * d[None, :]


def _support_power(adj: np.ndarray, m: int) -> np.ndarray:
    """Boolean support of adj^m for a reflexive adjacency matrix."""
    R = np.eye(len(adj), dtype=bool)
    step = adj.astype(bool)
    k = 0
    while k < m:
        nxt = (R.astype(np.int64) @ step.astype(np.int64)) > 0
        k += 1
        if (nxt == R).all():
            break
        R = nxt
    return R


def approximate_averaging(
    inst: MeasuredGroupoid,
    eps,
    params: ExpansionParams | None = None,
    C=Fraction(1, 4),
    n_max: int = 64,
    constant: str = "a-priori",
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> ApproximationResult:
    """Finite-propagation approximant of the averaging projection P_𝒢 (μ a probability measure)."""
    eps, C = as_fraction(eps), as_fraction(C)
    space = inst.space
    if not space.probability:
        raise ValueError("approximation of P_𝒢 needs a probability measure")
    G = inst.groupoid
    atoms = frozenset(range(G.n_atoms))
    P = averaging_projection(space)
    if params is None:
        try:
            params = ball_schedule(inst, exact_limit=max(exact_limit, 16))
        except MissingLevel as exc:
            raise InsufficientInstruments(1.0, "(no expansion schedule exists)") from exc
    best_tail = 1.0
    for n in range(1, n_max + 1):
        try:
            (dom,) = structure_exhaustion(inst, params, C, n, n_min=n, exact_limit=exact_limit)
        except (MissingLevel, StructureError) as exc:
            raise InsufficientInstruments(2 * best_tail, f"({exc})") from exc
        tail = space.measure(atoms - dom.Y)
        best_tail = min(best_tail, math.sqrt(tail))
        if tail < eps * eps / 4:
            break
    else:
        raise InsufficientInstruments(2 * best_tail, f"(domains never cover enough mass by n = {n_max})")
    return _approximate_on_domain(inst, P, dom, n, eps, C, constant, exact_limit, math.sqrt(tail))


def _approximate_on_domain(inst, P, dom, n, eps, C, constant, exact_limit, tail) -> ApproximationResult:
    space = inst.space
    G = inst.groupoid
    Y = sorted(dom.Y)
    K = dom.K
    b = build_kernel(space, Y, K)
    theta, N = dom.theta, K.N
    if len(Y) == 1:
        m, C_n, bound = 0, Fraction(0), 0.0
    else:
        if constant == "exact":
            ch = cheeger(b, exact_limit=exact_limit)
            C_n = as_fraction(ch.lo) * (1 - Fraction(1, 10**9))
            if C_n <= 0:
                raise InsufficientInstruments(2 * tail, "(Markov domain has zero Cheeger constant)")
        else:
            C_n = (C / 2) / (N * theta)
            _require_markov(space, Y, K, C_n, exact_limit, b, tail)
        m = mixing_exponent(N, theta, C_n, eps)
        bound = float(a_priori_bound(N, theta, C_n, m))
    W = (np.eye(b.n) + b.pi_float) / 2
    mu_t = b.mu_tilde_float
    Wm = lazy_power(W, mu_t, m)
    Wm = np.where(_support_power(b.counts > 0, m), Wm, 0.0)
    sigma = np.array([float(s) for s in b.sigma])
    scale = mu_t.sum() / float(space.measure(Y))
    T = np.zeros((G.n_atoms, G.n_atoms))
    T[np.ix_(Y, Y)] = scale * Wm / sigma[None, :]
    Top = WeightedOperator(T, space.float_weights())
    elems = power_elements(G, K.elements, m)
    K_decl = unital_symmetric_decomposition(G, elems, inst.length)
    err = (Top - P).norm()
    return ApproximationResult(Top, K_decl, eps, n, m, C_n, N, m * K.length_bound, theta, bound, tail, err, frozenset(Y))


def _require_markov(space, Y, K, C_n, exact_limit, bundle, tail) -> None:
    if len(Y) <= exact_limit:
        ok = markov_domain_check(space, Y, K, C_n, exact_limit).verdict is Verdict.PROVEN
    else:
        lam = kernel_spectrum(bundle.pi_float, bundle.mu_tilde_float)
        ok = (1 - lam) / 2 > float(C_n)
    if not ok:
        raise InsufficientInstruments(2 * tail, "(Markov constant not certified on the domain)")


def approximate_projection(
    inst: MeasuredGroupoid,
    eps,
    xi=None,
    params: ExpansionParams | None = None,
    C=Fraction(1, 4),
    n_max: int = 64,
    constant: str = "a-priori",
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> ApproximationResult:
    """Approximate P_𝒢 (``xi`` None) or the rank-one projection onto ξ by a finite-propagation operator."""
    if xi is None:
        return approximate_averaging(inst, eps, params, C, n_max, constant, exact_limit)
    pd = rank_one(inst.space, xi)
    G = inst.groupoid
    R, ell_R, emap = reduction(G, inst.length, pd.Y)
    red = MeasuredGroupoid(R, ell_R, pd.nu, inst.name + "-support")
    sub = approximate_averaging(red, eps, params, C, n_max, constant, exact_limit)
    chg = change_measure_unitary(AtomicMeasureSpace.uniform(len(pd.Y)), np.asarray(xi)[list(pd.Y)])
    T = pd.expand(chg.ad(sub.T.matrix))
    Top = WeightedOperator(T, inst.space.float_weights())
    elems = {emap[g] for g in sub.K.elements} | set(G.units)
    K_decl = unital_symmetric_decomposition(G, elems, inst.length)
    err = (Top - pd.P).norm()
    return ApproximationResult(Top, K_decl, sub.epsilon, sub.n, sub.m, sub.C_n, sub.N_n, sub.L, sub.theta,
                               sub.a_priori, sub.tail, err, frozenset(pd.Y[i] for i in sub.Y))


# --- quasi-locality versus expansion ------------------------------------------------------------


@dataclass(frozen=True)
class QuasiLocalLevel:
    epsilon: Fraction  # rational upper bound on the quasi-local level
    K: DecomposableSet
    power: int | None = None


def expansion_from_quasilocal(levels: Sequence[QuasiLocalLevel]) -> ExpansionParams:
    """Quasi-local parameters of P_𝒢 at ε give expansion at α = 4ε² with C = 1/2 and the same K."""
    out = []
    for lv in levels:
        alpha = 4 * lv.epsilon * lv.epsilon
        if 0 < alpha <= Fraction(1, 2):
            out.append(ExpansionLevel(alpha, Fraction(1, 2), lv.K))
    return ExpansionParams(tuple(out))


def quasilocal_from_expansion(params: ExpansionParams, eps, min_mass=None, piece_cap: int = 4096) -> QuasiLocalLevel:
    """Expansion at level ε gives quasi-locality of P_𝒢 at level √ε with K = K_ε^{2n}, (1+C_ε)^n·ε > 1/2."""
    from .core import power_decomposable

    eps = as_fraction(eps)
    lv = params.level_for(eps, min_mass)
    n, p = 0, eps
    while p <= Fraction(1, 2):
        p *= 1 + lv.C
        n += 1
    return QuasiLocalLevel(sqrt_upper(eps), power_decomposable(lv.K, 2 * n, piece_cap), n)


def quasilocality_expansion_transfer(direction: str, *args, **kwargs):
    if direction == "to-expansion":
        return expansion_from_quasilocal(*args, **kwargs)
    if direction == "to-quasilocal":
        return quasilocal_from_expansion(*args, **kwargs)
    raise ValueError(f"unknown direction {direction!r}")


# --- block families ---------------------------------------------------------------------------------


def family_assemble(blocks: Sequence[WeightedOperator]) -> WeightedOperator:
    """Block-diagonal operator on the disjoint union of the block spaces."""
    if not blocks:
        raise ValueError("need at least one block")
    M = block_diag(*(b.matrix for b in blocks))
    w = np.concatenate([b.weights for b in blocks])
    return WeightedOperator(M, w)


# --- desk-scale verdicts ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DeskVerdicts:
    expanding: bool
    quasilocal: bool
    approximable: bool
    details: dict

    @property
    def agree(self) -> bool:
        return self.expanding == self.quasilocal == self.approximable


def desk_verdicts(inst: MeasuredGroupoid, ladder: Sequence = EPSILON_LADDER, C=Fraction(1, 4),
                  exact_limit: int = DEFAULT_EXACT_LIMIT) -> DeskVerdicts:
    """Three verdicts on a probability instance: asymptotic expansion, quasi-locality of P_𝒢, approximability."""
    from .expansion import certify_expansion, min_relative_mass

    space = inst.space
    floor = min(min_relative_mass(space), Fraction(1, 2))
    top = inst.ball_decomposition(max(inst.radii()))
    exp_cert = certify_expansion(space, None, top, Fraction(0), floor, Fraction(1, 2), exact_limit=max(exact_limit, 16))
    expanding = exp_cert.verdict is Verdict.PROVEN
    P = averaging_projection(space)
    radii = inst.radii()
    ql_values = {}
    for eps in ladder:
        vals = [quasi_local_norm(P, inst.ball_decomposition(r), exact_limit=max(exact_limit, 16)).value for r in radii]
        ql_values[eps] = min(vals)
    quasilocal = all(v < float(e) for e, v in ql_values.items())
    approx = {}
    for eps in ladder:
        try:
            res = approximate_averaging(inst, eps, C=C, exact_limit=exact_limit)
            approx[eps] = res.error < float(eps) and bool(check_propagation(res.T, res.K))
        except InsufficientInstruments:
            approx[eps] = False
    details = dict(expansion=exp_cert, quasilocal=ql_values, approximation=approx)
    return DeskVerdicts(expanding, quasilocal, all(approx.values()), details)
