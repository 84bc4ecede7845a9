"""Normalised local Markov kernels, Cheeger constants and spectral gaps."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import mpmath
import numpy as np

from .core import AtomicMeasureSpace, DecomposableSet, as_fraction
from .expansion import Certificate, ExpansionDomain, Verdict, certify_expansion, DEFAULT_EXACT_LIMIT

PRECISION_BITS = 128
EIGEN_TOL = 1e-10

_MP = mpmath.MPContext()
_MP.prec = PRECISION_BITS


class NotUnital(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


def exact_sqrt(q: Fraction) -> Fraction | None:
    """√q when q is the square of a rational, else None."""
    a, b = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None


def sqrt_upper(q: Fraction, digits: int = 12) -> Fraction:
    """A rational upper bound for √q, exact when q is a rational square."""
    s = exact_sqrt(q)
    if s is not None:
        return s
    scale = 10**digits
    p = q.numerator * q.denominator
    return Fraction(math.isqrt(p * scale * scale) + 1, q.denominator * scale)


def mp(value):
    if isinstance(value, Fraction):
        return _MP.mpf(value.numerator) / value.denominator
    return _MP.mpf(value)


# --- kernel ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MarkovKernelBundle:
    """Π_{Y,K}, σ_{Y,K} and μ̃ = σμ on the sorted atom list ``atoms``.

    Entries are Fractions when every square root involved is rational and
    128-bit mpmath floats otherwise (``exact`` tells which).
    """

    atoms: tuple[int, ...]
    K: DecomposableSet
    space: AtomicMeasureSpace
    counts: np.ndarray  # counts[a, b]: pieces taking atoms[a] to atoms[b]
    root: tuple  # root[a][b] = √(μ(y)/μ(x)) where counts > 0, else 0
    sigma: tuple
    mu_tilde: tuple
    exact: bool

    @property
    def n(self) -> int:
        return len(self.atoms)

    @property
    def Y(self) -> frozenset[int]:
        return frozenset(self.atoms)

    def entry(self, a: int, b: int):
        c = int(self.counts[a, b])
        if c == 0:
            return Fraction(0) if self.exact else _MP.mpf(0)
        return c * self.root[a][b] / self.sigma[a]

    @property
    def Pi(self) -> tuple:
        return tuple(tuple(self.entry(a, b) for b in range(self.n)) for a in range(self.n))

    def flow_entry(self, a: int, b: int):
        """μ̃(x)Π(x,y) = (piece count)·√(μ(x)μ(y))."""
        return self.mu_tilde[a] * self.entry(a, b)

    @property
    def pi_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.Pi])

    @property
    def mu_tilde_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.mu_tilde])

    @property
    def flow_float(self) -> np.ndarray:
        w = np.array([float(self.space.weights[x]) for x in self.atoms])
        return self.counts * np.sqrt(np.outer(w, w))

    def local(self, A: Iterable[int]) -> list[int]:
        pos = {x: i for i, x in enumerate(self.atoms)}
        return [pos[x] for x in A]

    def laplacian(self) -> np.ndarray:
        return np.eye(self.n) - self.pi_float


def build_kernel(space: AtomicMeasureSpace, Y: Iterable[int] | None, K: DecomposableSet) -> MarkovKernelBundle:
    if not K.unital:
        raise NotUnital("the decomposition has no unit piece")
    if not K.symmetric:
        raise NotSymmetric("the decomposition has no symmetry permutation")
    atoms = tuple(sorted(range(space.n_atoms) if Y is None else set(Y)))
    pos = {x: i for i, x in enumerate(atoms)}
    n = len(atoms)
    counts = np.zeros((n, n), dtype=np.int64)
    for p in K.pieces:
        for s, r in p.tau:
            if s in pos and r in pos:
                counts[pos[s], pos[r]] += 1
    w = space.weights
    ratios = {(a, b): w[atoms[b]] / w[atoms[a]] for a, b in zip(*np.nonzero(counts))}
    roots = {k: exact_sqrt(v) for k, v in ratios.items()}
    exact = all(v is not None for v in roots.values())
    if not exact:
        roots = {k: _MP.sqrt(mp(v)) for k, v in ratios.items()}
    zero = Fraction(0) if exact else _MP.mpf(0)
    root = tuple(tuple(roots.get((a, b), zero) for b in range(n)) for a in range(n))
    sigma = tuple(sum((int(counts[a, b]) * root[a][b] for b in range(n)), zero) for a in range(n))
    mu_t = tuple(sigma[a] * (w[atoms[a]] if exact else mp(w[atoms[a]])) for a in range(n))
    bundle = MarkovKernelBundle(atoms, K, space, counts, root, sigma, mu_t, exact)
    _check_reversible(bundle)
    return bundle


def _check_reversible(b: MarkovKernelBundle) -> None:
    tol = 0 if b.exact else _MP.mpf(2) ** (-PRECISION_BITS + 16)
    for a in range(b.n):
        for c in range(a + 1, b.n):
            if abs(b.flow_entry(a, c) - b.flow_entry(c, a)) > tol:
                raise NumericalFailure(f"kernel is not reversible at ({b.atoms[a]}, {b.atoms[c]})")


def boundary_size(b: MarkovKernelBundle, A: Iterable[int]):
    """Σ_{x∈A} Π(x, Y∖A)·μ̃(x)."""
    inside = set(b.local(A))
    out = Fraction(0) if b.exact else _MP.mpf(0)
    for a in inside:
        for c in range(b.n):
            if c not in inside and b.counts[a, c]:
                out += b.flow_entry(a, c)
    return out


def tilde_measure(b: MarkovKernelBundle, A: Iterable[int]):
    return sum((b.mu_tilde[a] for a in b.local(A)), Fraction(0) if b.exact else _MP.mpf(0))


def reversing_measure_bounds(b: MarkovKernelBundle, A: Iterable[int]) -> tuple:
    """Slacks (μ̃(A) − μ(A), N√(μ(A)μ(Y)) − μ̃(A)) at 128-bit precision."""
    A = list(A)
    mA = mp(b.space.measure(A))
    mY = mp(b.space.measure(b.atoms))
    tA = mp(tilde_measure(b, A)) if b.exact else tilde_measure(b, A)
    return tA - mA, b.K.N * _MP.sqrt(mA * mY) - tA


# --- Cheeger constant -----------------------------------------------------------------


@dataclass(frozen=True)
class CheegerResult:
    lo: float
    hi: float
    exact: bool
    witness: frozenset[int] | None = None
    value: object = None  # Fraction or mpf when enumerated
    samples: int = 0


def _indicator_rows(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(float)


def enumerate_cheeger(flow: np.ndarray, m: np.ndarray, rel_tol: float = 1e-9):
    """Exact enumeration of min |∂A|/m(A) over 0 < m(A) ≤ m(Y)/2 in floating point.

    Returns (value, near-minimal masks sorted lexicographically); value is inf
    when no set is admissible.
    """
    n = len(m)
    X = _indicator_rows(n)
    mA = X @ m
    cut = np.einsum("ij,ij->i", X @ flow, 1 - X)
    adm = (mA > 0) & (mA <= m.sum() / 2 * (1 + 1e-12))
    if not adm.any():
        return math.inf, []
    ratio = np.where(adm, cut / np.where(adm, mA, 1), np.inf)
    lo = ratio.min()
    near = np.flatnonzero(ratio <= lo * (1 + rel_tol) + 1e-14 * flow.sum() / m.sum())
    return float(max(lo, 0.0)), [int(k) for k in near]


def kernel_spectrum(P: np.ndarray, m: np.ndarray) -> float:
    """sup of the spectrum of P on the m-orthogonal complement of constants (−inf when that space is 0)."""
    n = len(m)
    if n <= 1:
        return -math.inf
    d = np.sqrt(m)
    M = d[:, None] * P / d[None, :]
    M = (M + M.T) / 2
    v = d / np.linalg.norm(d)
    if np.linalg.norm(M @ v - v) > 1e-8:
        raise NumericalFailure("constants are not fixed by the kernel")
    Q = _complement(v)
    try:
        evals = np.linalg.eigvalsh(Q.T @ M @ Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return float(evals[-1])


def _complement(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the unit vector v."""
    u, _, _ = np.linalg.svd(v[:, None], full_matrices=True)
    return u[:, 1:]


def kernel_cheeger(P: np.ndarray, m: np.ndarray) -> tuple[float, int | None]:
    """Cheeger constant of a reversible kernel P with reversing measure m by enumeration."""
    flow = m[:, None] * P
    flow = (flow + flow.T) / 2
    val, near = enumerate_cheeger(flow, m)
    return val, (min(near, key=_bits_key) if near else None)


def _bits_key(mask: int):
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def _exact_ratio(b: MarkovKernelBundle, mask: int):
    A = [b.atoms[i] for i in _bits_key(mask)]
    return boundary_size(b, A) / tilde_measure(b, A), frozenset(A)


def _admissible_exact(b: MarkovKernelBundle, mask: int) -> bool:
    A = [b.atoms[i] for i in _bits_key(mask)]
    return 0 < 2 * tilde_measure(b, A) <= tilde_measure(b, b.atoms)


def cheeger(b: MarkovKernelBundle, mode: str = "auto", exact_limit: int = DEFAULT_EXACT_LIMIT,
            budget: int = 2000, seed: int = 0) -> CheegerResult:
    """κ by enumeration (|Y| ≤ exact_limit) or as the interval implied by the spectral gap."""
    if mode == "auto":
        mode = "exact" if b.n <= exact_limit else "interval"
    m = b.mu_tilde_float
    flow = b.flow_float
    if mode == "exact":
        _, near = enumerate_cheeger(flow, m)
        cands = [(k,) + _exact_ratio(b, k) for k in near if _admissible_exact(b, k)]
        if not cands:
            return CheegerResult(math.inf, math.inf, True, None, None, 1 << b.n)
        best = min(r for _, r, _ in cands)
        k = min((k for k, r, _ in cands if r == best), key=_bits_key)
        A = frozenset(b.atoms[i] for i in _bits_key(k))
        return CheegerResult(float(best), float(best), True, A, best, 1 << b.n)
    lam = kernel_spectrum(b.pi_float, m)
    gap = 1 - lam
    lo = gap / 2
    hi_spec = math.sqrt(2 * gap) if math.isfinite(gap) else math.inf
    hi, A, samples = _sampled_upper(b, flow, m, budget, seed)
    return CheegerResult(lo, min(hi, hi_spec), False, A if hi <= hi_spec else None, None, samples)


def _sampled_upper(b, flow, m, budget, seed):
    rng = random.Random(seed)
    n = b.n
    half = m.sum() / 2
    best, best_set, samples = math.inf, None, 0

    def score(sel):
        mA = m[sel].sum()
        if mA <= 0 or mA > half:
            return math.inf
        out = ~sel
        return flow[np.ix_(sel, out)].sum() / mA

    for _ in range(budget):
        sel = np.array([rng.random() < 0.5 for _ in range(n)])
        s = score(sel)
        samples += 1
        improved = True
        while improved:
            improved = False
            for i in range(n):
                sel[i] = not sel[i]
                t = score(sel)
                samples += 1
                if t < s:
                    s, improved = t, True
                else:
                    sel[i] = not sel[i]
        if s < best:
            best, best_set = s, frozenset(b.atoms[i] for i in np.flatnonzero(sel))
    return best, best_set, samples


# --- spectral gap -----------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralReport:
    lam: float
    kappa_lo: float
    kappa_hi: float
    kappa_exact: bool
    laplacian_gap: float
    eigen_tolerance: float = EIGEN_TOL

    @property
    def sandwich(self) -> bool:
        """κ²/2 ≤ 1−λ ≤ 2κ within 1e-9 (meaningful when κ is exact)."""
        if not math.isfinite(self.laplacian_gap):
            return True
        k = self.kappa_lo
        return k * k / 2 <= self.laplacian_gap + 1e-9 and self.laplacian_gap <= 2 * k + 1e-9


def spectral_gap(b: MarkovKernelBundle, exact_limit: int = DEFAULT_EXACT_LIMIT, seed: int = 0) -> SpectralReport:
    lam = kernel_spectrum(b.pi_float, b.mu_tilde_float)
    if math.isfinite(lam) and not (-1 - EIGEN_TOL <= lam <= 1 + EIGEN_TOL):
        raise NumericalFailure(f"eigenvalue {lam} outside [-1, 1]")
    ch = cheeger(b, exact_limit=exact_limit, seed=seed)
    return SpectralReport(lam, ch.lo, ch.hi, ch.exact, 1 - lam)


# --- Markov domains -----------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovDomain:
    Y: frozenset[int]
    C: Fraction
    K: DecomposableSet
    theta: Fraction
    certificate: Certificate | None = None

    @property
    def N(self) -> int:
        return self.K.N

    @property
    def L(self) -> Fraction:
        return self.K.length_bound


def markov_domain_check(space: AtomicMeasureSpace, Y: Iterable[int] | None, K: DecomposableSet, C,
                        exact_limit: int = DEFAULT_EXACT_LIMIT, seed: int = 0) -> Certificate:
    """Proven iff κ(Π_{Y,K}) > C strictly."""
    C = as_fraction(C)
    b = build_kernel(space, Y, K)
    ch = cheeger(b, exact_limit=exact_limit, seed=seed)
    base = dict(C=C, Y=b.Y, alpha_lo=None)
    if ch.exact:
        if ch.value is None:
            return Certificate(Verdict.PROVEN, "exact", note="no admissible set", samples=ch.samples, **base)
        k = ch.value
        greater = k > C if b.exact else k - mp(C) > _MP.mpf(2) ** (-PRECISION_BITS + 16)
        r = k if b.exact else Fraction(float(k))
        if greater:
            return Certificate(Verdict.PROVEN, "exact", ratio=r, worst=ch.witness, samples=ch.samples, **base)
        return Certificate(Verdict.REFUTED, "exact", witness=ch.witness, ratio=r, worst=ch.witness, samples=ch.samples, **base)
    if ch.lo > float(C) * (1 + 1e-9):
        return Certificate(Verdict.PROVEN, "spectral", ratio=Fraction(ch.lo), samples=ch.samples, seed=seed, **base)
    if ch.witness is not None and ch.hi < float(C):
        r = boundary_size(b, ch.witness) / tilde_measure(b, ch.witness)
        return Certificate(Verdict.REFUTED, "randomized", witness=ch.witness, ratio=Fraction(float(r)),
                           samples=ch.samples, seed=seed, **base)
    return Certificate(Verdict.UNKNOWN, "spectral", ratio=Fraction(ch.hi) if math.isfinite(ch.hi) else None,
                       samples=ch.samples, seed=seed, **base)


def markov_constant(C, N: int, theta) -> Fraction:
    """Markov constant C/(Nθ) obtained from an expansion domain."""
    return as_fraction(C) / (N * as_fraction(theta))


def expansion_constant(kappa, N: int, theta) -> Fraction:
    """Expansion constant κ/(N√θ+κ), rounded down to a rational when √θ is irrational."""
    kappa = as_fraction(kappa)
    return kappa / (N * sqrt_upper(as_fraction(theta)) + kappa)


def convert_expansion_markov(domain, space: AtomicMeasureSpace, direction: str | None = None,
                             exact_limit: int = DEFAULT_EXACT_LIMIT):
    """Translate between expansion domains and Markov domains with the same K and θ."""
    if direction is None:
        direction = "to-markov" if isinstance(domain, ExpansionDomain) else "to-expansion"
    small = len(domain.Y) <= exact_limit
    if direction == "to-markov":
        C = markov_constant(domain.C, domain.N, domain.theta)
        cert = markov_domain_check(space, domain.Y, domain.K, C, exact_limit) if small else None
        return MarkovDomain(domain.Y, C, domain.K, domain.theta, cert)
    if direction == "to-expansion":
        C = expansion_constant(domain.C, domain.N, domain.theta)
        cert = certify_expansion(space, domain.Y, domain.K, C, None, Fraction(1, 2), exact_limit=exact_limit) if small else None
        return ExpansionDomain(domain.Y, C, domain.K, domain.theta, cert)
    raise ValueError(f"unknown direction {direction!r}")


def random_reversible_kernel(n: int, rng: np.random.Generator, density: float = 0.6):
    """A reversible kernel from a random symmetric non-negative flow; returns (P, m)."""
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    W = W + W.T + np.diag(rng.random(n) * rng.integers(0, 2, n))
    m = W.sum(axis=1)
    isolated = m == 0
    W[isolated, isolated] = 1.0
    m = W.sum(axis=1)
    return W / m[:, None], m

