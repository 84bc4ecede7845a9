"""Factories for measured groupoids: pair groupoids, group actions, families."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .core import (
    AtomicMeasureSpace,
    FiniteGroupoid,
    GroupoidError,
    LengthFunction,
    MeasuredGroupoid,
    as_fraction,
)

Perm = tuple[int, ...]


@dataclass(frozen=True)
class FiniteMetricSpace:
    dist: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        d = tuple(tuple(as_fraction(v) for v in row) for row in self.dist)
        n = len(d)
        for x in range(n):
            if len(d[x]) != n or d[x][x] != 0:
                raise GroupoidError("distance matrix must be square with zero diagonal")
            for y in range(n):
                if d[x][y] != d[y][x] or (x != y and d[x][y] <= 0):
                    raise GroupoidError(f"metric axiom fails at ({x}, {y})")
        for x in range(n):
            for y in range(n):
                for z in range(n):
                    if d[x][z] > d[x][y] + d[y][z]:
                        raise GroupoidError(f"triangle inequality fails at ({x}, {y}, {z})")
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return len(self.dist)


def graph_distances(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    out = []
    for src in range(n):
        d = [-1] * n
        d[src] = 0
        q = deque([src])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if d[y] < 0:
                    d[y] = d[x] + 1
                    q.append(y)
        if min(d) < 0:
            raise GroupoidError("graph is disconnected; build blocks with family_union instead")
        out.append(d)
    return out


def graph_metric(n: int, edges: Iterable[tuple[int, int]]) -> FiniteMetricSpace:
    return FiniteMetricSpace(tuple(tuple(Fraction(v) for v in row) for row in graph_distances(n, edges)))


def pair_groupoid(X: FiniteMetricSpace, space: AtomicMeasureSpace | None = None, name: str = "") -> MeasuredGroupoid:
    """X×X with s(x,y)=y, r(x,y)=x, (x,y)(y,z)=(x,z) and length d(x,y)."""
    n = X.n
    space = space or AtomicMeasureSpace.uniform(n)
    if space.n_atoms != n:
        raise GroupoidError("one weight per point is required")
    idx = lambda x, y: x * n + y
    compose = {(idx(x, y), idx(y, z)): idx(x, z) for x in range(n) for y in range(n) for z in range(n)}
    G = FiniteGroupoid(
        units=tuple(idx(x, x) for x in range(n)),
        source=tuple(y for x in range(n) for y in range(n)),
        range=tuple(x for x in range(n) for y in range(n)),
        inverse=tuple(idx(y, x) for x in range(n) for y in range(n)),
        compose=compose,
        labels=tuple((x, y) for x in range(n) for y in range(n)),
    )
    ell = LengthFunction(tuple(X.dist[x][y] for x in range(n) for y in range(n)))
    return MeasuredGroupoid(G, ell, space, name)


# --- group actions ----------------------------------------------------------------


def compose_perm(p: Perm, q: Perm) -> Perm:
    """(p∘q)(x) = p(q(x))."""
    return tuple(p[q[x]] for x in range(len(q)))


def invert_perm(p: Perm) -> Perm:
    out = [0] * len(p)
    for x, y in enumerate(p):
        out[y] = x
    return tuple(out)


def word_lengths(generators: Sequence[Perm]) -> dict[Perm, int]:
    """Word length of every element of the generated group, by breadth-first search.

    The generating set is symmetrised before the search.
    """
    gens = list(dict.fromkeys(list(map(tuple, generators)) + [invert_perm(tuple(g)) for g in generators]))
    if not gens:
        raise GroupoidError("need at least one generator")
    e = tuple(range(len(gens[0])))
    lengths = {e: 0}
    q = deque([e])
    while q:
        g = q.popleft()
        for s in gens:
            h = compose_perm(s, g)
            if h not in lengths:
                lengths[h] = lengths[g] + 1
                q.append(h)
    return lengths


@dataclass(frozen=True)
class GroupAction:
    perms: tuple[Perm, ...]
    lengths: tuple[Fraction, ...]
    space: AtomicMeasureSpace

    def __post_init__(self):
        perms = tuple(tuple(p) for p in self.perms)
        object.__setattr__(self, "perms", perms)
        object.__setattr__(self, "lengths", tuple(as_fraction(v) for v in self.lengths))
        n = self.space.n_atoms
        index = {p: i for i, p in enumerate(perms)}
        if len(index) != len(perms) or len(self.lengths) != len(perms):
            raise GroupoidError("group elements must be distinct, one length each")
        if any(sorted(p) != list(range(n)) for p in perms):
            raise GroupoidError("every group element must permute the points")
        e = tuple(range(n))
        if e not in index or self.lengths[index[e]] != 0:
            raise GroupoidError("identity must be present with length 0")
        for i, p in enumerate(perms):
            pi = invert_perm(p)
            if pi not in index or self.lengths[index[pi]] != self.lengths[i]:
                raise GroupoidError("inverses must be present with equal length")
            for j, q in enumerate(perms):
                pq = compose_perm(p, q)
                if pq not in index:
                    raise GroupoidError("permutations are not closed under composition")
                if self.lengths[index[pq]] > self.lengths[i] + self.lengths[j]:
                    raise GroupoidError("group length is not subadditive")

    @classmethod
    def from_generators(cls, generators: Sequence[Perm], space: AtomicMeasureSpace | None = None) -> "GroupAction":
        wl = word_lengths(generators)
        perms = sorted(wl, key=lambda p: (wl[p], p))
        n = len(perms[0])
        return cls(tuple(perms), tuple(Fraction(wl[p]) for p in perms), space or AtomicMeasureSpace.uniform(n))

    @property
    def n_points(self) -> int:
        return self.space.n_atoms


def transformation_groupoid(action: GroupAction, name: str = "") -> MeasuredGroupoid:
    """X⋊Γ: s(x,g)=g⁻¹x, r(x,g)=x, (x,g)(g⁻¹x,h)=(x,gh), length of (x,g) = |g|."""
    perms = action.perms
    n, m = action.n_points, len(perms)
    index = {p: i for i, p in enumerate(perms)}
    inv = [index[invert_perm(p)] for p in perms]
    mul = [[index[compose_perm(p, q)] for q in perms] for p in perms]
    e = index[tuple(range(n))]
    idx = lambda x, g: x * m + g
    source, rng, inverse, labels = [], [], [], []
    for x in range(n):
        for g in range(m):
            gx = perms[inv[g]][x]
            source.append(gx)
            rng.append(x)
            inverse.append(idx(gx, inv[g]))
            labels.append((x, g))
    compose = {}
    for x in range(n):
        for g in range(m):
            y = perms[inv[g]][x]
            for h in range(m):
                compose[(idx(x, g), idx(y, h))] = idx(x, mul[g][h])
    G = FiniteGroupoid(
        units=tuple(idx(x, e) for x in range(n)),
        source=tuple(source),
        range=tuple(rng),
        inverse=tuple(inverse),
        compose=compose,
        labels=tuple(labels),
    )
    ell = LengthFunction(tuple(action.lengths[g] for x in range(n) for g in range(m)))
    return MeasuredGroupoid(G, ell, action.space, name)


def quotient_family(quotients: Sequence[Sequence[Perm]]) -> list[MeasuredGroupoid]:
    """One transformation groupoid per finite quotient, each with normalised counting measure.

    Each entry lists generator permutations of that quotient's point set.
    """
    out = []
    for i, gens in enumerate(quotients):
        gens = [tuple(g) for g in gens]
        action = GroupAction.from_generators(gens)
        out.append(transformation_groupoid(action, name=f"quotient-{i}"))
    return out


def family_union(blocks: Sequence[MeasuredGroupoid], normalize: bool = False, name: str = "") -> MeasuredGroupoid:
    """Disjoint union; arrows of different blocks never compose."""
    units, source, rng, inverse, labels, lengths, weights = [], [], [], [], [], [], []
    compose = {}
    ranges = []
    e_off = a_off = 0
    for b, inst in enumerate(blocks):
        G = inst.groupoid
        units += [u + e_off for u in G.units]
        source += [s + a_off for s in G.source]
        rng += [r + a_off for r in G.range]
        inverse += [g + e_off for g in G.inverse]
        labels += [(b, G.label(g)) for g in range(G.n_elements)]
        lengths += list(inst.length.values)
        weights += list(inst.space.weights)
        for (g, h), gh in G.compose.items():
            compose[(g + e_off, h + e_off)] = gh + e_off
        ranges.append((a_off, a_off + G.n_atoms))
        e_off += G.n_elements
        a_off += G.n_atoms
    space = AtomicMeasureSpace(tuple(weights))
    if normalize:
        space = space.normalized()
    U = FiniteGroupoid(tuple(units), tuple(source), tuple(rng), tuple(inverse), compose, tuple(labels))
    return MeasuredGroupoid(U, LengthFunction(tuple(lengths)), space, name, tuple(ranges))


# --- built-in instances --------------------------------------------------------------


def cycle_edges(n: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(i, i + 1) for i in range(n - 1)]


def complete_edges(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def pair_cycle(n: int, space: AtomicMeasureSpace | None = None) -> MeasuredGroupoid:
    return pair_groupoid(graph_metric(n, cycle_edges(n)), space, name=f"pair-cycle-{n}")


def pair_complete(n: int, space: AtomicMeasureSpace | None = None) -> MeasuredGroupoid:
    return pair_groupoid(graph_metric(n, complete_edges(n)), space, name=f"pair-complete-{n}")


def pair_path(n: int, space: AtomicMeasureSpace | None = None) -> MeasuredGroupoid:
    return pair_groupoid(graph_metric(n, [(i, i + 1) for i in range(n - 1)]), space, name=f"pair-path-{n}")


def action_zn(n: int) -> MeasuredGroupoid:
    """ℤ/n rotating n points, generator +1 of length 1."""
    shift = tuple((x + 1) % n for x in range(n))
    return transformation_groupoid(GroupAction.from_generators([shift]), name=f"action-z{n}")


def planted_pendant(core: int = 8, pendant_weight=Fraction(1, 800)) -> MeasuredGroupoid:
    """Complete graph on ``core`` heavy atoms plus one light atom joined to atom 0."""
    w = as_fraction(pendant_weight)
    heavy = (1 - w) / core
    edges = complete_edges(core) + [(0, core)]
    space = AtomicMeasureSpace(tuple([heavy] * core + [w]))
    return pair_groupoid(graph_metric(core + 1, edges), space, name=f"pendant-{core}")


def two_cliques(k: int = 4) -> MeasuredGroupoid:
    return family_union([pair_complete(k), pair_complete(k)], normalize=True, name=f"two-cliques-{k}")
