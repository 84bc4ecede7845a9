"""Expansion certificates, Følner sets, boosting and the structure exhaustion."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from . import _scan
from .core import (
    AtomicMeasureSpace,
    Bisection,
    DecomposableSet,
    FiniteGroupoid,
    MeasuredGroupoid,
    as_fraction,
    inverse_bisection,
    power_decomposable,
    power_elements,
    product_bisection,
    rn_table,
    saturate,
    union_decomposables,
    unital_symmetric_decomposition,
)

DEFAULT_EXACT_LIMIT = 14
HALF = Fraction(1, 2)


class DegenerateSet(ValueError):
    pass


class DegenerateDomain(ValueError):
    pass


class InvalidRange(ValueError):
    pass


class MissingLevel(LookupError):
    def __init__(self, alpha):
        super().__init__(f"no expansion level covers alpha = {alpha}")
        self.alpha = alpha


class OutsideFamily(ValueError):
    def __init__(self, piece):
        super().__init__("piece is outside the closure of the restricted family")
        self.piece = piece


class StructureError(RuntimeError):
    pass


class Verdict(str, Enum):
    PROVEN = "proven"
    REFUTED = "refuted"
    UNKNOWN = "unknown"

    @property
    def rank(self) -> int:
        return {"refuted": 0, "unknown": 1, "proven": 2}[self.value]


@dataclass(frozen=True)
class Certificate:
    """Outcome of an expansion-type check.

    ``ratio`` is the witness ratio for a refutation and the worst ratio seen
    otherwise (None when no admissible set exists).
    """

    verdict: Verdict
    method: str
    C: Fraction
    Y: frozenset[int]
    alpha_lo: Fraction | None = None
    beta_hi: Fraction = HALF
    witness: frozenset[int] | None = None
    ratio: Fraction | None = None
    worst: frozenset[int] | None = None
    samples: int = 0
    seed: int | None = None
    levels: tuple = ()
    note: str = ""


@dataclass(frozen=True)
class ExpansionLevel:
    alpha: Fraction
    C: Fraction
    K: DecomposableSet

    @property
    def N(self) -> int:
        return self.K.N

    @property
    def L(self) -> Fraction:
        return self.K.length_bound


@dataclass(frozen=True)
class ExpansionParams:
    levels: tuple[ExpansionLevel, ...]
    proofs: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lv = tuple(sorted(self.levels, key=lambda l: l.alpha))
        for l in lv:
            if not (0 < l.alpha <= HALF):
                raise InvalidRange(f"level alpha {l.alpha} outside (0, 1/2]")
            if not (l.K.unital and l.K.symmetric):
                raise ValueError("every level needs a unital symmetric decomposition")
        object.__setattr__(self, "levels", lv)

    def level_for(self, alpha, min_mass: Fraction | None = None) -> ExpansionLevel:
        """Largest scheduled level not above alpha.

        A level above alpha still applies when every nonempty set already has
        relative measure at least that level (``min_mass``).
        """
        alpha = as_fraction(alpha)
        reach = max(alpha, min_mass) if min_mass is not None else alpha
        ok = [l for l in self.levels if l.alpha <= reach]
        if not ok:
            raise MissingLevel(alpha)
        return ok[-1]


def min_relative_mass(space: AtomicMeasureSpace) -> Fraction:
    return min(space.weights) / space.total_mass


# --- single-set quantities --------------------------------------------------------


def expansion_ratio(space: AtomicMeasureSpace, K: DecomposableSet, A: Iterable[int], Y: Iterable[int] | None = None) -> Fraction:
    """μ((r(K·A)∖A)∩Y) / μ(A)."""
    A = frozenset(A)
    Y = frozenset(range(space.n_atoms)) if Y is None else frozenset(Y)
    mA = space.measure(A)
    if mA == 0:
        raise DegenerateSet("A has measure zero")
    return space.measure((saturate(K, A) - A) & Y) / mA


# --- certification ------------------------------------------------------------------


def _factor(*qs) -> int:
    """Largest multiplier applied to scaled measures in exact comparisons."""
    return max(max(abs(q.numerator), q.denominator) for q in qs if q is not None)


def _admissible(mu, total, alpha_lo, beta_hi):
    adm = (mu > 0) & _scan.le_scaled(mu, np.full_like(mu, total), beta_hi)
    if alpha_lo is not None and alpha_lo > 0:
        adm &= mu * alpha_lo.denominator >= alpha_lo.numerator * total
    return adm


def _greedy_descent(scan, start, admissible, score, budget_left):
    cur = start
    cur_s = score(cur)
    evals = 0
    improved = True
    while improved and evals < budget_left:
        improved = False
        for i in range(scan.n):
            cand = cur ^ (1 << i)
            if not admissible(cand):
                continue
            s = score(cand)
            evals += 1
            if s < cur_s:
                cur, cur_s, improved = cand, s, True
    return cur, cur_s, evals


def _random_scan(scan: _scan.SubsetScan, admissible, ratio, budget: int, seed: int):
    """Uniform random subsets followed by single-atom greedy moves."""
    rng = random.Random(seed)
    best = None
    samples = 0
    iters = 0
    while iters < 2 * budget:
        p = rng.random()
        start = 0
        for i in range(scan.n):
            if rng.random() < p:
                start |= 1 << i
        iters += 1
        if not admissible(start):
            continue
        samples += 1
        m, r, ev = _greedy_descent(scan, start, admissible, ratio, budget)
        samples += ev
        iters += 1
        if best is None or r < best[1] or (r == best[1] and _scan.bits(m) < _scan.bits(best[0])):
            best = (m, r)
    return best, samples


def certify_expansion(
    space: AtomicMeasureSpace,
    Y: Iterable[int] | None,
    K: DecomposableSet,
    C,
    alpha_lo=None,
    beta_hi=HALF,
    budget: int = 2000,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    seed: int = 0,
) -> Certificate:
    """Check μ((r(K·A)∖A)∩Y) > C·μ(A) for all A ⊆ Y with α_lo·μ(Y) ≤ μ(A) ≤ β_hi·μ(Y).

    ``alpha_lo=None`` admits every nonempty A.
    """
    C = as_fraction(C)
    beta_hi = as_fraction(beta_hi)
    alpha_lo = None if alpha_lo is None else as_fraction(alpha_lo)
    Y = frozenset(range(space.n_atoms)) if Y is None else frozenset(Y)
    if not Y:
        raise DegenerateDomain("Y is empty")
    scan = _scan.SubsetScan(Y, space.weights, K.neighbor_masks)
    base = dict(C=C, Y=Y, alpha_lo=alpha_lo, beta_hi=beta_hi)
    if scan.n <= exact_limit:
        masks = scan.masks()
        mu = scan.measure_table(factor=_factor(C, beta_hi, alpha_lo))
        sat = scan.saturation_table()
        bnd = mu[sat & ~masks]
        adm = _admissible(mu, scan.total, alpha_lo, beta_hi)
        found = _scan.argmin_ratio(bnd, mu, adm)
        if found is None:
            return Certificate(Verdict.PROVEN, "exact", samples=0, note="no admissible set", **base)
        m, r = found
        A = scan.to_atoms(m)
        if r <= C:
            return Certificate(Verdict.REFUTED, "exact", witness=A, ratio=r, worst=A, samples=int(adm.sum()), **base)
        return Certificate(Verdict.PROVEN, "exact", ratio=r, worst=A, samples=int(adm.sum()), **base)

    total = scan.total

    def admissible(m):
        a = scan.mask_measure(m)
        if a <= 0 or a * beta_hi.denominator > beta_hi.numerator * total:
            return False
        return alpha_lo is None or a * alpha_lo.denominator >= alpha_lo.numerator * total

    def ratio(m):
        return Fraction(scan.mask_measure(scan.mask_saturate(m) & ~m), scan.mask_measure(m))

    best, samples = _random_scan(scan, admissible, ratio, budget, seed)
    if best is None:
        return Certificate(Verdict.UNKNOWN, "randomized", samples=samples, seed=seed, note="no admissible sample", **base)
    A = scan.to_atoms(best[0])
    if best[1] <= C:
        return Certificate(Verdict.REFUTED, "randomized", witness=A, ratio=best[1], worst=A, samples=samples, seed=seed, **base)
    return Certificate(Verdict.UNKNOWN, "randomized", ratio=best[1], worst=A, samples=samples, seed=seed, **base)


def verify_refutation(space: AtomicMeasureSpace, K: DecomposableSet, cert: Certificate) -> bool:
    """Re-check a refutation witness without any search."""
    A = cert.witness
    mY = space.measure(cert.Y)
    mA = space.measure(A)
    if not A or not A <= cert.Y or mA > cert.beta_hi * mY:
        return False
    if cert.alpha_lo is not None and mA < cert.alpha_lo * mY:
        return False
    return expansion_ratio(space, K, A, cert.Y) <= cert.C


def certify_asymptotic(
    space: AtomicMeasureSpace,
    params: ExpansionParams,
    budget: int = 2000,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    seed: int = 0,
) -> Certificate:
    """Certify every scheduled level; the aggregate is the weakest level verdict."""
    Y = frozenset(range(space.n_atoms))
    certs = tuple(
        certify_expansion(space, Y, lv.K, lv.C, lv.alpha, HALF, budget, exact_limit, seed) for lv in params.levels
    )
    if not certs:
        raise MissingLevel(None)
    weakest = min(certs, key=lambda c: c.verdict.rank)
    return replace(weakest, levels=certs, alpha_lo=weakest.alpha_lo)


def worst_ratio(space, K, Y=None, alpha_lo=None, beta_hi=HALF) -> tuple[frozenset[int] | None, Fraction | None]:
    """Exact minimum expansion ratio over admissible sets (exhaustive)."""
    cert = certify_expansion(space, Y, K, Fraction(-1), alpha_lo, beta_hi, exact_limit=64)
    return cert.worst, cert.ratio


def ball_schedule(
    inst: MeasuredGroupoid,
    alphas: Sequence | None = None,
    safety=Fraction(99, 100),
    exact_limit: int = 16,
) -> ExpansionParams:
    """Expansion schedule drawn from the ball family.

    For each level the smallest ball radius whose exact worst ratio over
    admissible sets is positive is used, with C a fixed fraction of that ratio.
    """
    space = inst.space
    if inst.n_atoms > exact_limit:
        raise ValueError("ball_schedule scans exhaustively; instance exceeds exact_limit")
    alphas = [min(min_relative_mass(space), HALF)] if alphas is None else [as_fraction(a) for a in alphas]
    levels = []
    for alpha in alphas:
        for r in inst.radii():
            K = inst.ball_decomposition(r)
            cert = certify_expansion(space, None, K, Fraction(0), alpha, HALF, exact_limit=exact_limit)
            if cert.verdict is Verdict.PROVEN:
                C = Fraction(1) if cert.ratio is None else safety * cert.ratio
                levels.append(ExpansionLevel(alpha, C, K))
                break
        else:
            raise MissingLevel(alpha)
    return ExpansionParams(tuple(levels))


# --- boosting -------------------------------------------------------------------------


@dataclass(frozen=True)
class BoostResult:
    C: Fraction
    K: DecomposableSet
    alpha: Fraction
    beta: Fraction
    alpha_prime: Fraction


def boost_beta(params: ExpansionParams, alpha, beta, min_mass: Fraction | None = None) -> BoostResult:
    """Extend a level-α instrument to sets of relative measure up to β."""
    alpha, beta = as_fraction(alpha), as_fraction(beta)
    if not (HALF <= beta < 1):
        raise InvalidRange(f"beta = {beta} outside [1/2, 1)")
    if not (0 < alpha <= HALF):
        raise InvalidRange(f"alpha = {alpha} outside (0, 1/2]")
    alpha_p = (1 - beta) / 2
    la = params.level_for(alpha, min_mass)
    lp = params.level_for(alpha_p, min_mass)
    q = (1 - beta) / (2 * beta)
    C = min(la.C, q * lp.C, q)
    K = la.K if la.K is lp.K else union_decomposables(la.K, lp.K)
    return BoostResult(C, K, alpha, beta, alpha_p)


def power_exponent(C_prime, alpha, beta) -> int:
    """Least m with (1+C')^m ≥ 1/(αβ)."""
    C_prime, alpha, beta = as_fraction(C_prime), as_fraction(alpha), as_fraction(beta)
    if C_prime <= 0:
        raise InvalidRange("C' must be positive")
    target = 1 / (alpha * beta)
    m, p = 0, Fraction(1)
    while p < target:
        p *= 1 + C_prime
        m += 1
    return m


@dataclass(frozen=True)
class PowerResult:
    K: DecomposableSet
    m: int


def boost_power(K_prime: DecomposableSet, C_prime, alpha, beta, piece_cap: int = 4096) -> PowerResult:
    """(K')^m with m the least integer such that (1+C')^m ≥ 1/(αβ)."""
    m = power_exponent(C_prime, alpha, beta)
    return PowerResult(power_decomposable(K_prime, m, piece_cap), m)


@dataclass(frozen=True)
class SubsetInstrument:
    """Instrument valid on every Y with μ(Y) ≥ β: sets A ⊆ Y with αμ(Y) ≤ μ(A) ≤ μ(Y)/2 expand by C."""

    K: DecomposableSet
    C: Fraction
    alpha: Fraction
    beta: Fraction
    C_prime: Fraction
    m: int


def subset_instrument(params: ExpansionParams, alpha, beta, C, min_mass=None, piece_cap: int = 4096) -> SubsetInstrument:
    alpha, beta, C = as_fraction(alpha), as_fraction(beta), as_fraction(C)
    if not (0 < C < 1):
        raise InvalidRange("C must lie in (0, 1)")
    inner = boost_beta(params, alpha * beta, 1 - (1 - C) * beta / 2, min_mass)
    m = power_exponent(inner.C, alpha, beta)
    G = inner.K.groupoid
    elems = power_elements(G, inner.K.elements, m)
    K = unital_symmetric_decomposition(G, elems, inner.K.length)
    return SubsetInstrument(K, C, alpha, beta, inner.C, m)


# --- Følner sets -------------------------------------------------------------------------


@dataclass(frozen=True)
class FolnerResult:
    F: frozenset[int]
    epsilon: Fraction
    K: DecomposableSet
    maximal: str  # "exact" or "greedy-local"
    post_check: bool | None = None


def _folner_maximality_check(scan, mu, sat, masks, Fm: int, eps: Fraction) -> bool:
    outside = (masks & Fm) == 0
    cap2 = scan.total - 2 * int(mu[Fm])  # 2·(μ(Y)/2 − μ(F))
    adm = outside & (mu > 0) & (2 * mu <= cap2)
    bnd = mu[(sat & ~masks) & ~Fm & scan.full]
    bad = adm & _scan.le_scaled(bnd, mu, eps)
    return not bool(bad.any())


def maximal_folner(
    space: AtomicMeasureSpace,
    Y: Iterable[int],
    K: DecomposableSet,
    eps,
    mode: str = "auto",
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> FolnerResult:
    """A maximal (ε,K)-Følner set in Y; exact mode picks maximum measure, then lexicographic."""
    eps = as_fraction(eps)
    Y = frozenset(Y)
    if not Y:
        raise DegenerateDomain("Y is empty")
    scan = _scan.SubsetScan(Y, space.weights, K.neighbor_masks)
    if mode == "auto":
        mode = "exact" if scan.n <= exact_limit else "greedy"
    if mode == "exact":
        masks = scan.masks()
        mu = scan.measure_table(factor=2 * _factor(eps))
        sat = scan.saturation_table()
        bnd = mu[sat & ~masks]
        ok = (2 * mu <= scan.total) & _scan.le_scaled(bnd, mu, eps)
        idx = np.flatnonzero(ok)
        best = max(int(mu[i]) for i in idx)
        Fm = _scan.lex_min(i for i in idx if int(mu[i]) == best)
        post = _folner_maximality_check(scan, mu, sat, masks, Fm, eps)
        return FolnerResult(scan.to_atoms(Fm), eps, K, "exact", post)

    def folner(m):
        a = scan.mask_measure(m)
        if 2 * a > scan.total:
            return False
        b = scan.mask_measure(scan.mask_saturate(m) & ~m)
        return b * eps.denominator <= eps.numerator * a

    Fm = 0
    grown = True
    while grown:
        grown = False
        for i in range(scan.n):
            if not Fm >> i & 1 and folner(Fm | 1 << i):
                Fm |= 1 << i
                grown = True
                break
    return FolnerResult(scan.to_atoms(Fm), eps, K, "greedy-local", None)


# --- structure exhaustion --------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionDomain:
    Y: frozenset[int]
    C: Fraction
    K: DecomposableSet
    theta: Fraction
    certificate: Certificate | None = None
    n: int | None = None
    alpha_n: Fraction | None = None
    Z: frozenset[int] = frozenset()
    F: frozenset[int] = frozenset()
    folner: FolnerResult | None = None
    measure_bound: Fraction | None = None
    power: int | None = None

    @property
    def N(self) -> int:
        return self.K.N

    @property
    def L(self) -> Fraction:
        return self.K.length_bound


def ratio_bound_holds(space: AtomicMeasureSpace, Y: Iterable[int], K: DecomposableSet, theta: Fraction) -> bool:
    Y = frozenset(Y)
    for (i, x), r in rn_table(K, space).items():
        y = K.pieces[i].map[x]
        if x in Y and y in Y and not (1 / theta <= r <= theta):
            return False
    return True


def structure_alpha(C: Fraction, n: int) -> Fraction:
    return C / ((4 + 2 * C) * (n + 1))


def structure_exhaustion(
    inst: MeasuredGroupoid,
    params: ExpansionParams,
    C,
    n_max: int,
    n_min: int = 1,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    folner_mode: str = "auto",
) -> list[ExpansionDomain]:
    """Domains Y_n of (C/2, N_n, L_n)-expansion with ratio bound θ_n = N_n(n+1)."""
    C = as_fraction(C)
    if not (0 < C < HALF):
        raise InvalidRange("C must lie in (0, 1/2)")
    space = inst.space.normalized()
    G = inst.groupoid
    atoms = frozenset(range(G.n_atoms))
    floor = min_relative_mass(space)
    out = []
    for n in range(n_min, n_max + 1):
        alpha_n = structure_alpha(C, n)
        inst_n = subset_instrument(params, alpha_n, HALF, C, floor)
        K = inst_n.K
        theta = Fraction(K.N * (n + 1))
        Z = frozenset(K.pieces[i].map[x] for (i, x), r in rn_table(K, space).items() if r < 1 / theta)
        X = atoms - Z
        if not X:
            raise StructureError(f"bad-ratio set exhausts the space at n = {n}")
        fol = maximal_folner(space, X, K, C, folner_mode, exact_limit)
        Y = X - fol.F
        bound = (1 - alpha_n) * Fraction(n, n + 1)
        if not space.measure(Y) > bound:
            raise StructureError(f"measure bound fails at n = {n}: {space.measure(Y)} <= {bound}")
        if not ratio_bound_holds(space, Y, K, theta):
            raise StructureError(f"ratio bound fails at n = {n}")
        cert = None
        if Y and len(Y) <= exact_limit:
            cert = certify_expansion(space, Y, K, C / 2, None, HALF, exact_limit=exact_limit)
            if fol.maximal != "exact":
                cert = replace(cert, verdict=Verdict.UNKNOWN, note="greedy Følner set")
        out.append(ExpansionDomain(Y, C / 2, K, theta, cert, n, alpha_n, Z, fol.F, fol, bound, inst_n.m))
    return out


# --- restricted families ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RestrictedFamily:
    """A generating set of bisections whose closure under products and inverses is explored lazily."""

    generators: tuple[Hashable, ...]
    unit: Hashable
    compose: Callable[[Hashable, Hashable], Hashable | None]
    inverse: Callable[[Hashable], Hashable]
    depth_cap: int = 4
    everything: bool = False

    @classmethod
    def of_bisections(cls, G: FiniteGroupoid, generators: Iterable[Bisection], depth_cap: int = 4) -> "RestrictedFamily":
        def comp(a, b):
            p = product_bisection(G, a, b)
            return p if p.members else None

        unit = Bisection.from_members(G, G.units)
        return cls(tuple(generators), unit, comp, lambda a: inverse_bisection(G, a), depth_cap)

    @classmethod
    def all_bisections(cls, G: FiniteGroupoid) -> "RestrictedFamily":
        unit = Bisection.from_members(G, G.units)
        return cls((), unit, lambda a, b: None, lambda a: a, 0, everything=True)

    def closure(self) -> dict:
        """Members reachable within the depth cap, each with a word of generator indices (negative = inverse)."""
        cached = self.__dict__.get("_closure")
        if cached is not None:
            return cached
        letters = [(g, (i + 1,)) for i, g in enumerate(self.generators)]
        letters += [(self.inverse(g), (-(i + 1),)) for i, g in enumerate(self.generators)]
        words = {self.unit: ()}
        for g, w in letters:
            words.setdefault(g, w)
        frontier = list(words.items())
        for _ in range(max(self.depth_cap - 1, 0)):
            nxt = []
            for a, wa in frontier:
                for g, wg in letters:
                    p = self.compose(a, g)
                    if p is not None and p not in words:
                        words[p] = wa + wg
                        nxt.append((p, words[p]))
            if not nxt:
                break
            frontier = nxt
        self.__dict__["_closure"] = words
        return words

    def word(self, piece) -> tuple | None:
        if self.everything:
            return ()
        return self.closure().get(piece)


def restrict_family(params: ExpansionParams, family: RestrictedFamily) -> ExpansionParams:
    """Attach membership words for every piece; reject pieces outside the explored closure."""
    proofs = {}
    for lv in params.levels:
        words = []
        for p in lv.K.pieces:
            w = family.word(p)
            if w is None:
                raise OutsideFamily(p)
            words.append(w)
        proofs[lv.alpha] = tuple(words)
    return ExpansionParams(params.levels, proofs)
