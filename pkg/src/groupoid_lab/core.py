"""Finite groupoids with length functions, atomic measures and decomposable sets.

Atoms are the units of the groupoid, indexed ``0..n_atoms-1``.  ``source`` and
``range`` map an element to the *atom index* of its source or range unit, and
``units[a]`` is the element id of the unit sitting at atom ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence


class GroupoidError(ValueError):
    pass


class NotABisection(GroupoidError):
    pass


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12) if value != int(value) else Fraction(int(value))
    return Fraction(value)


@dataclass(frozen=True, eq=False)
class FiniteGroupoid:
    units: tuple[int, ...]
    source: tuple[int, ...]
    range: tuple[int, ...]
    inverse: tuple[int, ...]
    compose: Mapping[tuple[int, int], int]
    labels: tuple | None = None

    def __repr__(self) -> str:
        return f"FiniteGroupoid(elements={self.n_elements}, atoms={self.n_atoms})"

    def __post_init__(self):
        n = len(self.source)
        if not (len(self.range) == len(self.inverse) == n):
            raise GroupoidError("source, range and inverse tables differ in length")
        object.__setattr__(self, "compose", MappingProxyType(dict(self.compose)))

    @property
    def n_elements(self) -> int:
        return len(self.source)

    @property
    def n_atoms(self) -> int:
        return len(self.units)

    @cached_property
    def atom_of(self) -> dict[int, int]:
        return {u: a for a, u in enumerate(self.units)}

    @cached_property
    def unit_set(self) -> frozenset[int]:
        return frozenset(self.units)

    def product(self, g: int, h: int) -> int | None:
        return self.compose.get((g, h))

    def label(self, g: int):
        return self.labels[g] if self.labels is not None else g


@dataclass(frozen=True)
class LengthFunction:
    values: tuple[Fraction, ...]

    def __call__(self, g: int) -> Fraction:
        return self.values[g]

    @classmethod
    def from_values(cls, values: Iterable) -> "LengthFunction":
        return cls(tuple(as_fraction(v) for v in values))


def coarsened_length(ell: LengthFunction) -> LengthFunction:
    """Integer coarsening: the least integer n with the element in the ball of radius n."""
    return LengthFunction(tuple(Fraction(math.ceil(v)) for v in ell.values))


@dataclass(frozen=True)
class AtomicMeasureSpace:
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        ws = tuple(as_fraction(w) for w in self.weights)
        if any(w <= 0 for w in ws):
            raise GroupoidError("atom weights must be strictly positive")
        object.__setattr__(self, "weights", ws)

    @classmethod
    def uniform(cls, n: int) -> "AtomicMeasureSpace":
        return cls(tuple(Fraction(1, n) for _ in range(n)))

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @cached_property
    def total_mass(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @property
    def probability(self) -> bool:
        return self.total_mass == 1

    def measure(self, atoms: Iterable[int]) -> Fraction:
        return sum((self.weights[a] for a in atoms), Fraction(0))

    def normalized(self) -> "AtomicMeasureSpace":
        t = self.total_mass
        return AtomicMeasureSpace(tuple(w / t for w in self.weights))

    def float_weights(self):
        import numpy as np

        return np.array([float(w) for w in self.weights])


@dataclass(frozen=True)
class Bisection:
    members: frozenset[int]
    tau: tuple[tuple[int, int], ...]  # sorted (source atom, range atom) pairs

    @classmethod
    def from_members(cls, G: FiniteGroupoid, members: Iterable[int]) -> "Bisection":
        members = frozenset(members)
        pairs = []
        seen_s, seen_r = set(), set()
        for g in sorted(members):
            s, r = G.source[g], G.range[g]
            if s in seen_s or r in seen_r:
                raise NotABisection(f"element {g} repeats a source or range atom")
            seen_s.add(s)
            seen_r.add(r)
            pairs.append((s, r))
        return cls(members, tuple(sorted(pairs)))

    @cached_property
    def map(self) -> dict[int, int]:
        return dict(self.tau)

    @cached_property
    def domain(self) -> frozenset[int]:
        return frozenset(s for s, _ in self.tau)

    @cached_property
    def codomain(self) -> frozenset[int]:
        return frozenset(r for _, r in self.tau)

    def __len__(self) -> int:
        return len(self.members)


def inverse_bisection(G: FiniteGroupoid, K: Bisection) -> Bisection:
    return Bisection.from_members(G, (G.inverse[g] for g in K.members))


def product_bisection(G: FiniteGroupoid, K1: Bisection, K2: Bisection) -> Bisection:
    """K1·K2 = {g h : g in K1, h in K2, s(g) = r(h)}."""
    by_source = {G.source[g]: g for g in K1.members}
    out = []
    for h in K2.members:
        g = by_source.get(G.range[h])
        if g is not None:
            out.append(G.compose[(g, h)])
    return Bisection.from_members(G, out)


@dataclass(frozen=True, eq=False)
class DecomposableSet:
    groupoid: FiniteGroupoid = field(repr=False)
    length: LengthFunction = field(repr=False)
    pieces: tuple[Bisection, ...]
    sigma: tuple[int, ...] | None
    unital_index: int | None

    @cached_property
    def length_bound(self) -> Fraction:
        """Max length over members."""
        return max((self.length(g) for g in self.elements), default=Fraction(0))

    @property
    def N(self) -> int:
        return len(self.pieces)

    @cached_property
    def elements(self) -> frozenset[int]:
        out: set[int] = set()
        for p in self.pieces:
            out |= p.members
        return frozenset(out)

    @property
    def unital(self) -> bool:
        return self.unital_index is not None

    @property
    def symmetric(self) -> bool:
        return self.sigma is not None

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        """Bit mask of r(K·{x}) for every atom x."""
        masks = [0] * self.groupoid.n_atoms
        for p in self.pieces:
            for s, r in p.tau:
                masks[s] |= 1 << r
        return tuple(masks)

    @cached_property
    def relation(self) -> frozenset[tuple[int, int]]:
        """Pairs (x, y) with y in r(K·{x})."""
        return frozenset((s, r) for p in self.pieces for s, r in p.tau)


def _infer_sigma(G: FiniteGroupoid, pieces: Sequence[Bisection]) -> tuple[int, ...] | None:
    slots: dict[frozenset, list[int]] = {}
    for i, p in enumerate(pieces):
        slots.setdefault(p.members, []).append(i)
    sigma = [None] * len(pieces)
    for members, idx in slots.items():
        inv = frozenset(G.inverse[g] for g in members)
        partners = slots.get(inv)
        if partners is None or len(partners) != len(idx):
            return None
        for i, j in zip(idx, partners):
            sigma[i] = j
    return tuple(sigma)


def make_decomposable(G: FiniteGroupoid, ell: LengthFunction, pieces: Iterable[Bisection]) -> DecomposableSet:
    """Wrap pieces, inferring the unital index and the symmetry permutation from the sets."""
    pieces = tuple(pieces)
    unital_index = next((i for i, p in enumerate(pieces) if p.members == G.unit_set), None)
    return DecomposableSet(G, ell, pieces, _infer_sigma(G, pieces), unital_index)


def units_decomposable(G: FiniteGroupoid, ell: LengthFunction) -> DecomposableSet:
    return make_decomposable(G, ell, [Bisection.from_members(G, G.units)])


# --- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    axiom: str
    witness: tuple


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(G: FiniteGroupoid, max_per_axiom: int = 5) -> ValidationReport:
    found: list[Violation] = []
    counts: dict[str, int] = {}

    def bad(axiom, *witness):
        if counts.get(axiom, 0) < max_per_axiom:
            found.append(Violation(axiom, witness))
        counts[axiom] = counts.get(axiom, 0) + 1

    n, na = G.n_elements, G.n_atoms
    if len(set(G.units)) != na or any(not 0 <= u < n for u in G.units):
        bad("units", tuple(G.units))
        return ValidationReport(tuple(found))
    for a, u in enumerate(G.units):
        if G.source[u] != a or G.range[u] != a:
            bad("unit-structure", u)
        if G.inverse[u] != u:
            bad("unit-inverse", u)
    for g in range(n):
        if not (0 <= G.source[g] < na and 0 <= G.range[g] < na and 0 <= G.inverse[g] < n):
            bad("table-range", g)
            return ValidationReport(tuple(found))
    for g in range(n):
        gi = G.inverse[g]
        if G.inverse[gi] != g:
            bad("involution", g)
        if G.source[gi] != G.range[g] or G.range[gi] != G.source[g]:
            bad("inverse-source-range", g)
    for (g, h), gh in G.compose.items():
        if G.source[g] != G.range[h]:
            bad("composability", g, h)
            continue
        if not 0 <= gh < n:
            bad("table-range", g, h)
            continue
        if G.source[gh] != G.source[h] or G.range[gh] != G.range[g]:
            bad("composition-source-range", g, h)
    by_range: dict[int, list[int]] = {}
    for h in range(n):
        by_range.setdefault(G.range[h], []).append(h)
    for g in range(n):
        for h in by_range.get(G.source[g], []):
            if (g, h) not in G.compose:
                bad("composability", g, h)
    for g in range(n):
        if G.compose.get((G.units[G.range[g]], g)) != g or G.compose.get((g, G.units[G.source[g]])) != g:
            bad("identity", g)
        gi = G.inverse[g]
        if G.compose.get((gi, g)) != G.units[G.source[g]] or G.compose.get((g, gi)) != G.units[G.range[g]]:
            bad("inverse-composition", g)
    for (g, h), gh in G.compose.items():
        for k in by_range.get(G.source[h], []):
            hk = G.compose.get((h, k))
            left = G.compose.get((gh, k))
            right = G.compose.get((g, hk)) if hk is not None else None
            if left is None or left != right:
                bad("associativity", g, h, k)
    return ValidationReport(tuple(found))


def validate_length(G: FiniteGroupoid, ell: LengthFunction) -> ValidationReport:
    found = []
    if len(ell.values) != G.n_elements:
        return ValidationReport((Violation("length-size", (len(ell.values),)),))
    for g in range(G.n_elements):
        if ell(g) < 0:
            found.append(Violation("length-nonnegative", (g,)))
        if ell(G.inverse[g]) != ell(g):
            found.append(Violation("length-symmetric", (g,)))
    for u in G.units:
        if ell(u) != 0:
            found.append(Violation("length-unit", (u,)))
    for (g, h), gh in G.compose.items():
        if ell(gh) > ell(g) + ell(h):
            found.append(Violation("length-subadditive", (g, h)))
    return ValidationReport(tuple(found))


# --- sets and saturations -------------------------------------------------------


def ball(G: FiniteGroupoid, ell: LengthFunction, n) -> frozenset[int]:
    n = as_fraction(n)
    return frozenset(g for g in range(G.n_elements) if ell(g) <= n)


def saturate(K: DecomposableSet, A: Iterable[int]) -> frozenset[int]:
    """r(K·A) as the union of tau_{K_i}(A ∩ s(K_i))."""
    A = set(A)
    out: set[int] = set()
    for p in K.pieces:
        m = p.map
        for x in A:
            y = m.get(x)
            if y is not None:
                out.add(y)
    return frozenset(out)


def saturate_mask(K: DecomposableSet, mask: int) -> int:
    nbr = K.neighbor_masks
    out = 0
    while mask:
        low = mask & -mask
        out |= nbr[low.bit_length() - 1]
        mask ^= low
    return out


def compose_decomposables(K1: DecomposableSet, K2: DecomposableSet) -> DecomposableSet:
    """Pieces K1_i·K2_j with empty and repeated pieces dropped."""
    G = K1.groupoid
    seen = set()
    pieces = []
    for p in K1.pieces:
        for q in K2.pieces:
            pq = product_bisection(G, p, q)
            if pq.members and pq.members not in seen:
                seen.add(pq.members)
                pieces.append(pq)
    return make_decomposable(G, K1.length, pieces)


def invert_decomposable(K: DecomposableSet) -> DecomposableSet:
    G = K.groupoid
    pieces = tuple(inverse_bisection(G, p) for p in K.pieces)
    return DecomposableSet(G, K.length, pieces, _infer_sigma(G, pieces), K.unital_index)


def union_decomposables(K1: DecomposableSet, K2: DecomposableSet) -> DecomposableSet:
    G = K1.groupoid
    pieces = K1.pieces + K2.pieces
    unital_index = K1.unital_index if K1.unital_index is not None else (
        None if K2.unital_index is None else K2.unital_index + K1.N)
    return DecomposableSet(G, K1.length, pieces, _infer_sigma(G, pieces), unital_index)


def decompose(G: FiniteGroupoid, S: Iterable[int], ell: LengthFunction) -> DecomposableSet:
    """Greedy colouring of the conflict graph (shared source or shared range)."""
    used_s: list[set[int]] = []
    used_r: list[set[int]] = []
    classes: list[list[int]] = []
    for g in sorted(set(S)):
        s, r = G.source[g], G.range[g]
        for c in range(len(classes)):
            if s not in used_s[c] and r not in used_r[c]:
                break
        else:
            c = len(classes)
            classes.append([])
            used_s.append(set())
            used_r.append(set())
        classes[c].append(g)
        used_s[c].add(s)
        used_r[c].add(r)
    pieces = [Bisection.from_members(G, cl) for cl in classes]
    return make_decomposable(G, ell, pieces)


def unital_symmetric_decomposition(G: FiniteGroupoid, S: Iterable[int], ell: LengthFunction) -> DecomposableSet:
    """Decompose a symmetric set containing the units as units + self-inverse pieces.

    Non-unit arrows are grouped with their inverses into matchings on atoms;
    isotropy arrows that are not involutions go into paired pieces D, D⁻¹.
    """
    S = set(S) | set(G.units)
    if any(G.inverse[g] not in S for g in S):
        raise GroupoidError("set is not symmetric")
    done: set[int] = set(G.units)
    inv_pieces: list[list[int]] = []
    inv_atoms: list[set[int]] = []
    loop_pieces: list[list[int]] = []
    loop_atoms: list[set[int]] = []
    for g in sorted(S):
        if g in done:
            continue
        gi = G.inverse[g]
        done.add(g)
        done.add(gi)
        s, r = G.source[g], G.range[g]
        if s == r and gi != g:
            for c in range(len(loop_pieces)):
                if s not in loop_atoms[c]:
                    break
            else:
                c = len(loop_pieces)
                loop_pieces.append([])
                loop_atoms.append(set())
            loop_pieces[c].append(g)
            loop_atoms[c].add(s)
            continue
        atoms = {s, r}
        for c in range(len(inv_pieces)):
            if not (atoms & inv_atoms[c]):
                break
        else:
            c = len(inv_pieces)
            inv_pieces.append([])
            inv_atoms.append(set())
        inv_pieces[c].extend({g, gi})
        inv_atoms[c] |= atoms
    pieces = [Bisection.from_members(G, G.units)]
    pieces += [Bisection.from_members(G, p) for p in inv_pieces]
    for p in loop_pieces:
        b = Bisection.from_members(G, p)
        pieces += [b, inverse_bisection(G, b)]
    return make_decomposable(G, ell, pieces)


def power_elements(G: FiniteGroupoid, elements: Iterable[int], m: int) -> frozenset[int]:
    """Element set of K^m, iterating products until m is reached or the set stabilises."""
    base = frozenset(elements)
    by_range: dict[int, list[int]] = {}
    for h in base:
        by_range.setdefault(G.range[h], []).append(h)
    if m <= 0:
        return G.unit_set
    cur = base
    for _ in range(m - 1):
        nxt = set()
        for g in cur:
            for h in by_range.get(G.source[g], ()):
                nxt.add(G.compose[(g, h)])
        nxt = frozenset(nxt)
        if nxt == cur:
            break
        cur = nxt
    return cur


def power_decomposable(K: DecomposableSet, m: int, piece_cap: int = 4096) -> DecomposableSet:
    """K^m by repeated composition, re-decomposing the element set once pieces exceed the cap."""
    G, ell = K.groupoid, K.length
    if m <= 0:
        return units_decomposable(G, ell)
    cur = K
    for _ in range(m - 1):
        if cur.N * K.N > piece_cap:
            elems = power_elements(G, K.elements, m)
            return unital_symmetric_decomposition(G, elems, ell)
        cur = compose_decomposables(cur, K)
    return cur


def rn_table(K: DecomposableSet, space: AtomicMeasureSpace) -> dict[tuple[int, int], Fraction]:
    """Ratio mu(tau_i(x)) / mu(x) for every piece i and x in s(K_i)."""
    w = space.weights
    return {(i, s): w[r] / w[s] for i, p in enumerate(K.pieces) for s, r in p.tau}


def reduction(G: FiniteGroupoid, ell: LengthFunction, Y: Iterable[int]):
    """Reduction groupoid over the atom set Y.

    Returns (groupoid, length, element_map) where element_map[i] is the
    original id of reduced element i; reduced atoms follow the sorted order of Y.
    """
    Y = sorted(set(Y))
    pos = {a: i for i, a in enumerate(Y)}
    keep = [g for g in range(G.n_elements) if G.source[g] in pos and G.range[g] in pos]
    new = {g: i for i, g in enumerate(keep)}
    R = FiniteGroupoid(
        units=tuple(new[G.units[a]] for a in Y),
        source=tuple(pos[G.source[g]] for g in keep),
        range=tuple(pos[G.range[g]] for g in keep),
        inverse=tuple(new[G.inverse[g]] for g in keep),
        compose={(new[g], new[h]): new[gh] for (g, h), gh in G.compose.items() if g in new and h in new},
        labels=None if G.labels is None else tuple(G.labels[g] for g in keep),
    )
    return R, LengthFunction(tuple(ell(g) for g in keep)), tuple(keep)


@dataclass(frozen=True, eq=False)
class MeasuredGroupoid:
    """A groupoid with its length function and atomic measure."""

    groupoid: FiniteGroupoid
    length: LengthFunction
    space: AtomicMeasureSpace
    name: str = ""
    blocks: tuple[tuple[int, int], ...] | None = None  # atom ranges of family blocks

    @property
    def n_atoms(self) -> int:
        return self.groupoid.n_atoms

    def ball(self, n) -> frozenset[int]:
        return ball(self.groupoid, self.length, n)

    def ball_decomposition(self, n) -> DecomposableSet:
        return unital_symmetric_decomposition(self.groupoid, self.ball(n), self.length)

    def radii(self) -> list[Fraction]:
        return sorted(set(self.length.values))


# --- JSON instance format -----------------------------------------------------------

GPD_FORMAT = "gpd/1"


def to_gpd_json(inst: MeasuredGroupoid) -> dict:
    G = inst.groupoid
    return {
        "format": GPD_FORMAT,
        "name": inst.name,
        "elements": G.n_elements,
        "units": list(G.units),
        "source": [G.units[a] for a in G.source],
        "range": [G.units[a] for a in G.range],
        "inverse": list(G.inverse),
        "compose": [[g, h, gh] for (g, h), gh in sorted(G.compose.items())],
        "length": [str(v) for v in inst.length.values],
        "weights": [str(w) for w in inst.space.weights],
    }


def from_gpd_json(data: dict) -> MeasuredGroupoid:
    if data.get("format") != GPD_FORMAT:
        raise GroupoidError(f"expected format {GPD_FORMAT!r}, got {data.get('format')!r}")
    units = tuple(int(u) for u in data["units"])
    atom = {u: a for a, u in enumerate(units)}
    n = data["elements"] if isinstance(data["elements"], int) else len(data["elements"])
    try:
        src = tuple(atom[int(u)] for u in data["source"])
        rng = tuple(atom[int(u)] for u in data["range"])
    except KeyError as exc:
        raise GroupoidError(f"source/range entry {exc} is not a unit") from None
    G = FiniteGroupoid(
        units=units,
        source=src,
        range=rng,
        inverse=tuple(int(g) for g in data["inverse"]),
        compose={(int(g), int(h)): int(gh) for g, h, gh in data["compose"]},
    )
    if G.n_elements != n:
        raise GroupoidError("element count does not match the tables")
    ell = LengthFunction.from_values(data["length"])
    space = AtomicMeasureSpace(tuple(Fraction(w) for w in data["weights"]))
    if space.n_atoms != G.n_atoms:
        raise GroupoidError("one weight per unit is required")
    return MeasuredGroupoid(G, ell, space, data.get("name", ""))
