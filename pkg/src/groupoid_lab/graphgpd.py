"""Graph groupoids over infinite path spaces, handled through exact cylinder-set arithmetic."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .core import as_fraction
from .expansion import Certificate, Verdict, RestrictedFamily

HALF = Fraction(1, 2)


class InvalidPath(ValueError):
    pass


class WindowExceeded(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class Path:
    """A finite path: start vertex plus a tuple of edge ids (length 0 is the vertex itself)."""

    start: int
    edges: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.edges)

    def is_prefix_of(self, other: "Path") -> bool:
        return self.start == other.start and other.edges[: len(self.edges)] == self.edges

    def extend(self, *edges: int) -> "Path":
        return Path(self.start, self.edges + tuple(edges))


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """A finite window of a directed graph.

    ``edges[e] = (s, r)``. Every window vertex lists all of its outgoing edges,
    whose ranges may lie outside the window; every edge entering a window
    vertex is assumed to start inside the window.
    """

    vertices: frozenset[int]
    edges: tuple[tuple[int, int], ...]
    b: Mapping[int, Fraction]
    name: str = ""

    def __post_init__(self):
        for v in self.vertices:
            if v not in self.b or self.b[v] <= 0:
                raise ValueError(f"vertex {v} needs a positive weight")
        if sum(self.b[v] for v in self.vertices) > 1:
            raise ValueError("vertex weights must sum to at most 1")
        for s, _ in self.edges:
            if s not in self.vertices:
                raise ValueError(f"edge source {s} lies outside the window")

    @cached_property
    def out_edges(self) -> dict[int, tuple[int, ...]]:
        out = {v: [] for v in self.vertices}
        for e, (s, _) in enumerate(self.edges):
            out[s].append(e)
        return {v: tuple(es) for v, es in out.items()}

    @cached_property
    def in_edges(self) -> dict[int, tuple[int, ...]]:
        inn = {v: [] for v in self.vertices}
        for e, (_, r) in enumerate(self.edges):
            if r in inn:
                inn[r].append(e)
        return {v: tuple(es) for v, es in inn.items()}

    def sdeg(self, v: int) -> int:
        return len(self.out_edges[v])

    def terminal(self, v: int) -> bool:
        return self.sdeg(v) == 0

    def src(self, e: int) -> int:
        return self.edges[e][0]

    def rng(self, e: int) -> int:
        return self.edges[e][1]

    def end(self, p: Path) -> int:
        return self.rng(p.edges[-1]) if p.edges else p.start

    def vertices_of(self, p: Path) -> list[int]:
        return [p.start] + [self.rng(e) for e in p.edges]

    def check_path(self, p: Path) -> None:
        if p.start not in self.vertices:
            raise WindowExceeded(f"path starts at {p.start}, outside the window")
        v = p.start
        for e in p.edges:
            if not 0 <= e < len(self.edges) or self.src(e) != v:
                raise InvalidPath(f"edge {e} does not continue the path at vertex {v}")
            v = self.rng(e)
            if v not in self.vertices:
                raise WindowExceeded(f"path reaches vertex {v}, outside the window")

    def safe(self, v: int) -> bool:
        """Non-terminal window vertex whose outgoing edges all stay in the window."""
        return v in self.vertices and not self.terminal(v) and all(self.rng(e) in self.vertices for e in self.out_edges[v])


def cylinder_measure_path(G: DirectedGraph, p: Path) -> Fraction:
    """μ(Z(α)) = b_v·∏ 1/s-deg(s(α_i))."""
    G.check_path(p)
    m = Fraction(G.b[p.start])
    v = p.start
    for e in p.edges:
        m /= G.sdeg(v)
        v = G.rng(e)
    return m


# --- cylinder unions ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CylinderUnion:
    """Finite union of cylinders kept in canonical form.

    Canonical form: no path has a proper prefix in the set, and no path has
    all of its one-edge extensions in the set. Equal sets have equal forms.
    """

    graph: DirectedGraph = field(repr=False)
    paths: frozenset[Path]

    @classmethod
    def of(cls, G: DirectedGraph, paths: Iterable[Path]) -> "CylinderUnion":
        return cls(G, canonicalize(G, paths))

    @cached_property
    def measure(self) -> Fraction:
        return sum((cylinder_measure_path(self.graph, p) for p in self.paths), Fraction(0))

    def __eq__(self, other) -> bool:
        return isinstance(other, CylinderUnion) and self.paths == other.paths

    def __hash__(self) -> int:
        return hash(self.paths)

    def __or__(self, other: "CylinderUnion") -> "CylinderUnion":
        return CylinderUnion.of(self.graph, self.paths | other.paths)

    def contains(self, p: Path) -> bool:
        """Z(p) ⊆ this union."""
        return any(q.is_prefix_of(p) for q in self.paths)

    def sorted_paths(self) -> list[Path]:
        return sorted(self.paths)


def canonicalize(G: DirectedGraph, paths: Iterable[Path]) -> frozenset[Path]:
    ps = set(paths)
    for p in ps:
        G.check_path(p)
    ps = {p for p in ps if not any(Path(p.start, p.edges[:i]) in ps for i in range(len(p.edges)))}
    changed = True
    while changed:
        changed = False
        parents = {}
        for p in ps:
            if p.edges:
                parents.setdefault(Path(p.start, p.edges[:-1]), set()).add(p.edges[-1])
        for parent in sorted(parents, key=len, reverse=True):
            kids = parents[parent]
            if set(G.out_edges[G.end(parent)]) == kids:
                ps -= {parent.extend(e) for e in kids}
                ps.add(parent)
                changed = True
                break
    return frozenset(ps)


def cylinder_measure(A: CylinderUnion) -> Fraction:
    return A.measure


def refine(G: DirectedGraph, p: Path) -> list[Path]:
    """Z(α) = ⊔_e Z(αe)."""
    v = G.end(p)
    if v not in G.vertices or G.terminal(v):
        raise WindowExceeded(f"cannot refine the cylinder at vertex {v}")
    out = [p.extend(e) for e in G.out_edges[v]]
    for q in out:
        G.check_path(q)
    return out


def b1_image(G: DirectedGraph, p: Path) -> list[Path]:
    """Cylinders of r(B₁·Z(α)): α, every one-edge prepend and the first-edge drop."""
    out = [p]
    for e in G.in_edges[p.start]:
        out.append(Path(G.src(e), (e,) + p.edges))
    if p.edges:
        out.append(Path(G.rng(p.edges[0]), p.edges[1:]))
    else:
        for q in refine(G, p):
            out.append(Path(G.rng(q.edges[0]), ()))
    return out


def b1_saturate(G: DirectedGraph, A: CylinderUnion) -> CylinderUnion:
    out = []
    for p in A.paths:
        out.extend(b1_image(G, p))
    return CylinderUnion.of(G, out)


def bn_saturate(G: DirectedGraph, A: CylinderUnion, n: int) -> CylinderUnion:
    for _ in range(n):
        A = b1_saturate(G, A)
    return A


# --- symbolic bisections Z(α, β) ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class ZPair:
    """The bisection Z(α,β) taking βx to αx (α and β end at the same vertex)."""

    alpha: Path
    beta: Path

    @property
    def inverse(self) -> "ZPair":
        return ZPair(self.beta, self.alpha)

    @property
    def size(self) -> int:
        return len(self.alpha) + len(self.beta)


def zpair(G: DirectedGraph, alpha: Path, beta: Path) -> ZPair:
    G.check_path(alpha)
    G.check_path(beta)
    if G.end(alpha) != G.end(beta):
        raise InvalidPath("α and β must end at the same vertex")
    return ZPair(alpha, beta)


def zpair_product(a: ZPair, b: ZPair) -> ZPair | None:
    """Z(α,β)·Z(γ,δ), or None when empty."""
    beta, gamma = a.beta, b.alpha
    if beta.is_prefix_of(gamma):
        rest = gamma.edges[len(beta.edges):]
        return ZPair(a.alpha.extend(*rest), b.beta)
    if gamma.is_prefix_of(beta):
        rest = beta.edges[len(gamma.edges):]
        return ZPair(a.alpha, b.beta.extend(*rest))
    return None


def zpair_apply(G: DirectedGraph, z: ZPair, A: CylinderUnion) -> CylinderUnion:
    """τ_{Z(α,β)}(A ∩ Z(β))."""
    out = []
    for p in A.paths:
        if z.beta.is_prefix_of(p):
            out.append(z.alpha.extend(*p.edges[len(z.beta.edges):]))
        elif p.is_prefix_of(z.beta):
            out.append(z.alpha)
    return CylinderUnion.of(G, out)


def paths_from(G: DirectedGraph, v: int, length: int) -> list[Path]:
    out = [Path(v)]
    frontier = [Path(v)]
    for _ in range(length):
        nxt = []
        for p in frontier:
            w = G.end(p)
            if w not in G.vertices:
                continue
            for e in G.out_edges[w]:
                if G.rng(e) in G.vertices:
                    nxt.append(p.extend(e))
        out += nxt
        frontier = nxt
    return out


def ball_pieces(G: DirectedGraph, n: int) -> list[ZPair]:
    """All Z(α,β) with |α|+|β| ≤ n inside the window."""
    by_end: dict[int, list[Path]] = {}
    for v in sorted(G.vertices):
        for p in paths_from(G, v, n):
            by_end.setdefault(G.end(p), []).append(p)
    out = []
    for ps in by_end.values():
        for a in ps:
            for b in ps:
                if len(a) + len(b) <= n:
                    out.append(ZPair(a, b))
    return sorted(out)


def ball_saturate_direct(G: DirectedGraph, A: CylinderUnion, n: int) -> CylinderUnion:
    """r(B_n·A) as the union of τ_Z(A) over all pieces Z(α,β) of B_n."""
    out = set()
    for z in ball_pieces(G, n):
        out |= zpair_apply(G, z, A).paths
    return CylinderUnion.of(G, out)


def _overlap(p: Path, q: Path) -> bool:
    return p.is_prefix_of(q) or q.is_prefix_of(p)


def ball_decomposition_count(G: DirectedGraph, n: int) -> int:
    """Number of bisections in a greedy prefix-conflict colouring of the pieces of B_n."""
    colours: list[list[ZPair]] = []
    for z in ball_pieces(G, n):
        for cl in colours:
            if not any(_overlap(z.alpha, w.alpha) or _overlap(z.beta, w.beta) for w in cl):
                cl.append(z)
                break
        else:
            colours.append([z])
    return len(colours)


_UNIT = "units"


def graph_family(G: DirectedGraph, depth_cap: int = 4) -> RestrictedFamily:
    """Restricted family generated by Z(v,v) and the one-edge pieces Z(e, r(e))."""
    gens = [ZPair(Path(v), Path(v)) for v in sorted(G.vertices)]
    gens += [ZPair(Path(G.src(e), (e,)), Path(G.rng(e))) for e in range(len(G.edges)) if G.rng(e) in G.vertices]

    def compose(a, b):
        if a == _UNIT:
            return b
        if b == _UNIT:
            return a
        return zpair_product(a, b)

    def inverse(a):
        return a if a == _UNIT else a.inverse

    return RestrictedFamily(tuple(gens), _UNIT, compose, inverse, depth_cap)


def family_accepts(family: RestrictedFamily, pieces: Iterable[ZPair]) -> list[ZPair]:
    """Pieces outside the explored closure (empty when all are accepted)."""
    return [z for z in pieces if family.word(z) is None]


# --- expansion over cylinder unions ------------------------------------------------------------------


def cylinder_atoms(G: DirectedGraph, depth_cap: int, atom_limit: int) -> list[Path]:
    """Partition of the safe part of the path space into cylinders.

    Starts from Z(v) for safe vertices and keeps splitting the heaviest
    splittable cylinder (ties lexicographic) while the atom budget allows.
    """
    atoms = [Path(v) for v in sorted(G.vertices) if G.safe(v)]
    if not atoms:
        raise WindowExceeded("no vertex of the window is safe")

    def splittable(p):
        v = G.end(p)
        return len(p) < depth_cap and G.sdeg(v) >= 2 and all(G.safe(G.rng(e)) for e in G.out_edges[v])

    while True:
        cands = [p for p in atoms if splittable(p)]
        if not cands:
            break
        p = min(cands, key=lambda q: (-cylinder_measure_path(G, q), q))
        if len(atoms) - 1 + G.sdeg(G.end(p)) > atom_limit:
            break
        atoms.remove(p)
        atoms += refine(G, p)
    return sorted(atoms)


def _check_depth(G: DirectedGraph, depth_cap: int) -> None:
    first = min(G.vertices)
    for p in paths_from(G, first, depth_cap):
        if not G.safe(G.end(p)):
            raise WindowExceeded(f"paths of length {depth_cap} from vertex {first} leave the safe window")


@dataclass(frozen=True)
class CylinderCertificate:
    verdict: Verdict
    method: str
    C: Fraction
    alpha: Fraction
    radius: int
    checked: int
    witness: CylinderUnion | None = None
    ratio: Fraction | None = None  # min μ(r(B_n·A))/μ(A) over checked sets
    worst: CylinderUnion | None = None
    seed: int | None = None
    weight_ratio: Fraction | None = None  # least C with b_w/C ≤ b_v ≤ C·b_w on window edges
    note: str = ""


def weight_ratio(G: DirectedGraph) -> Fraction:
    """Least C with b_w/C ≤ b_v ≤ C·b_w on every window edge (v, w)."""
    return max((max(G.b[v] / G.b[w], G.b[w] / G.b[v]) for v, w in G.edges if w in G.vertices), default=Fraction(1))


def expansion_check_cylinders(
    G: DirectedGraph,
    C,
    alpha,
    depth_cap: int = 10,
    atom_limit: int = 16,
    exact_limit: int = 16,
    budget: int = 2000,
    seed: int = 0,
    extra: Sequence[CylinderUnion] = (),
    radius: int = 1,
    total=Fraction(1),
) -> CylinderCertificate:
    """Check μ(r(B_n·A)) > (1+C)μ(A) for cylinder unions A with α ≤ μ(A) ≤ total/2."""
    C, alpha, total = as_fraction(C), as_fraction(alpha), as_fraction(total)
    _check_depth(G, depth_cap)
    atoms = cylinder_atoms(G, depth_cap, atom_limit)
    k = len(atoms)
    if k <= exact_limit:
        method = "exhaustive"
        masks: Iterable[int] = range(1, 1 << k)
    else:
        method = "sampled"
        rng = random.Random(seed)
        masks = [rng.getrandbits(k) or 1 for _ in range(budget)]
    sets = (CylinderUnion.of(G, [atoms[i] for i in range(k) if m >> i & 1]) for m in masks)
    worst, worst_r, checked, witness, wr = None, None, 0, None, None
    for A in list(sets) + list(extra):
        mA = A.measure
        if not (0 < mA and alpha <= mA and 2 * mA <= total):
            continue
        checked += 1
        r = bn_saturate(G, A, radius).measure / mA
        if worst_r is None or r < worst_r:
            worst, worst_r = A, r
        if witness is None and r <= 1 + C:
            witness, wr = A, r
    flag = weight_ratio(G)
    if witness is not None:
        return CylinderCertificate(Verdict.REFUTED, method, C, alpha, radius, checked, witness, wr, worst, seed, flag)
    verdict = Verdict.PROVEN if method == "exhaustive" else Verdict.UNKNOWN
    note = f"over unions of {k} cylinders at depth ≤ {depth_cap}"
    return CylinderCertificate(verdict, method, C, alpha, radius, checked, None, worst_r, worst, seed, flag, note)


# --- the example family V = ℕ, E = {(n, n+i)} ------------------------------------------------------------


def branching_graph(k: int, M: int) -> DirectedGraph:
    """Window {0..M−1} of the graph on ℕ with edges n → n+i, i = 1..k, and b_n = 1/2^{n+1}."""
    if k < 1 or M < 2:
        raise ValueError("need k ≥ 1 and M ≥ 2")
    edges = tuple((n, n + i) for n in range(M) for i in range(1, k + 1))
    b = {n: Fraction(1, 2 ** (n + 1)) for n in range(M)}
    return DirectedGraph(frozenset(range(M)), edges, b, name=f"branching-k{k}-M{M}")


def hit_measure(k: int, n_max: int) -> list[Fraction]:
    """μ(Z_{0,n}) for n = 0..n_max: b_0 times the probability that the walk from 0 visits n."""
    h = [Fraction(0)] * (n_max + 1)
    h[0] = Fraction(1)
    for n in range(1, n_max + 1):
        h[n] = sum((h[n - i] for i in range(1, k + 1) if n - i >= 0), Fraction(0)) / k
    return [x / 2 for x in h]


def select_np(k: int, p: int, z0: Sequence[Fraction]) -> int:
    """Least n in {pk+1, …, (p+1)k} with μ(Z_{0,n}) ≥ 1/(k+1)."""
    for n in range(p * k + 1, (p + 1) * k + 1):
        if z0[n] >= Fraction(1, k + 1):
            return n
    raise ValueError(f"no qualifying n for p = {p}")


def edge_id(G: DirectedGraph, s: int, r: int) -> int:
    for e in G.out_edges[s]:
        if G.rng(e) == r:
            return e
    raise InvalidPath(f"no edge {s} → {r}")


def paths_between(G: DirectedGraph, m: int, n: int) -> list[Path]:
    """All paths from m to n (the graph is acyclic and increasing)."""
    out = []

    def walk(p: Path):
        v = G.end(p)
        if v == n:
            out.append(p)
            return
        for e in G.out_edges[v]:
            if G.rng(e) <= n:
                walk(p.extend(e))

    walk(Path(m))
    return out


def witness_set(G: DirectedGraph, n_p: int) -> CylinderUnion:
    """A_p: every path through the edge n_p → n_p+1 that starts at a vertex ≤ n_p."""
    e = edge_id(G, n_p, n_p + 1)
    paths = [p.extend(e) for m in range(n_p + 1) for p in paths_between(G, m, n_p)]
    return CylinderUnion.of(G, paths)


@dataclass(frozen=True)
class WitnessRow:
    k: int
    p: int
    n_p: int
    z0: Fraction  # μ(Z_{0,n_p})
    mu_A: Fraction
    saturated: Fraction  # μ(r(B₁·A_p))
    boundary: Fraction  # μ(r(B₁·A_p)) − μ(A_p)
    A: CylinderUnion = field(repr=False, compare=False)

    @property
    def ratio(self) -> Fraction:
        return self.boundary / self.mu_A

    @property
    def identities(self) -> dict[str, bool]:
        k = self.k
        return {
            "z0 >= 1/(k+1)": self.z0 >= Fraction(1, k + 1),
            "mu(A_p) > 1/(k(k+1))": self.mu_A > Fraction(1, k * (k + 1)),
            "mu(A_p) <= 1/k": self.mu_A <= Fraction(1, k),
            "boundary = 1/2^(n_p+2)": self.boundary == Fraction(1, 2 ** (self.n_p + 2)),
        }


@dataclass(frozen=True)
class BranchingReport:
    k: int
    M: int
    rows: tuple[WitnessRow, ...]
    certificate: CylinderCertificate | None

    @property
    def identities_hold(self) -> bool:
        return all(all(r.identities.values()) for r in self.rows)

    @property
    def boundaries_decrease(self) -> bool:
        b = [r.boundary for r in self.rows]
        return all(x > y for x, y in zip(b, b[1:]))


def branching_example(k: int, M: int, p_max: int = 5, C=None, depth_cap: int = 10, seed: int = 0):
    """Build the window and the witness table; k = 1 also runs the expansion check, k ≥ 2 the refutation."""
    G = branching_graph(k, M)
    if k == 1:
        C = Fraction(49, 100) if C is None else as_fraction(C)
        cert = expansion_check_cylinders(G, C, Fraction(0), depth_cap=min(depth_cap, M - 2), seed=seed)
        return G, BranchingReport(k, M, (), cert)
    C = Fraction(1, 100) if C is None else as_fraction(C)
    z0 = hit_measure(k, (p_max + 1) * k + 1)
    rows = []
    for p in range(1, p_max + 1):
        n_p = select_np(k, p, z0)
        if n_p + 1 >= M - k:
            raise WindowExceeded(f"window M = {M} too small for p = {p}")
        A = witness_set(G, n_p)
        sat = b1_saturate(G, A).measure
        rows.append(WitnessRow(k, p, n_p, z0[n_p], A.measure, sat, sat - A.measure, A))
    alpha = Fraction(1, k * (k + 1))
    refuting = [r for r in rows if r.ratio <= C]
    if refuting:
        r = refuting[0]
        cert = CylinderCertificate(Verdict.REFUTED, "witness", C, alpha, 1, len(rows), r.A, 1 + r.ratio, r.A)
    else:
        best = min(rows, key=lambda r: r.ratio)
        cert = CylinderCertificate(Verdict.UNKNOWN, "witness", C, alpha, 1, len(rows), None, 1 + best.ratio, best.A,
                                   note="no witness row falls to the constant; raise p")
    return G, BranchingReport(k, M, tuple(rows), cert)


@dataclass(frozen=True)
class FamilyWitness:
    L: int
    p: int
    value_squared: Fraction  # μ(A_p)·(1 − μ(r(B_L·A_p)))

    @property
    def value(self) -> float:
        return math.sqrt(self.value_squared)


def branching_family_quasilocal(k: int, M: int, ps: Sequence[int], lengths: Sequence[int], eps) -> dict[int, FamilyWitness]:
    """Per propagation length L, the largest exact witness value ‖χ_A P χ_B‖ over the blocks p.

    Each block is a probability copy of the path space; A = A_p and B is the
    complement of r(B_L·A_p), so the value is √(μ(A_p)(1 − μ(r(B_L·A_p)))).
    """
    G = branching_graph(k, M)
    z0 = hit_measure(k, (max(ps) + 1) * k + 1)
    out = {}
    for L in lengths:
        best = None
        for p in ps:
            n_p = select_np(k, p, z0)
            A = witness_set(G, n_p)
            v2 = A.measure * (1 - bn_saturate(G, A, L).measure)
            if best is None or v2 > best.value_squared:
                best = FamilyWitness(L, p, v2)
        out[L] = best
    return out


def recursion_holds(k: int, n_max: int) -> bool:
    """μ(Z_{0,n}) + Σ_{j=1}^{k−1} ((k−j)/k)·μ(Z_{0,n−j}) = 1/2 for k ≤ n ≤ n_max."""
    z = hit_measure(k, n_max)
    return all(
        z[n] + sum((Fraction(k - j, k) * z[n - j] for j in range(1, k)), Fraction(0)) == HALF
        for n in range(k, n_max + 1)
    )

