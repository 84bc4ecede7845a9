"""Vectorised tables over all subsets of a small atom set.

Bit i of a local mask stands for the i-th atom of the sorted local atom list.
Measures are scaled to integers by a common denominator so every comparison
is exact.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np

_INT64_SAFE = 2**62


def bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def lex_min(masks) -> int:
    """Mask whose sorted bit list is lexicographically smallest."""
    return min((int(m) for m in masks), key=bits)


class SubsetScan:
    def __init__(self, atoms: Sequence[int], weights: Sequence[Fraction], nbr: Sequence[int] | None = None):
        self.atoms = tuple(sorted(atoms))
        self.n = len(self.atoms)
        self.pos = {a: i for i, a in enumerate(self.atoms)}
        ws = [Fraction(weights[a]) for a in self.atoms]
        self.scale = math.lcm(*(w.denominator for w in ws)) if ws else 1
        self.w = [int(w * self.scale) for w in ws]
        self.total = sum(self.w)
        self.nbr = None
        if nbr is not None:
            local = []
            for a in self.atoms:
                m = 0
                for b in bits(nbr[a]):
                    if b in self.pos:
                        m |= 1 << self.pos[b]
                local.append(m)
            self.nbr = local

    @property
    def full(self) -> int:
        return (1 << self.n) - 1

    def dtype(self, factor: int = 1):
        return np.int64 if self.total * max(factor, 1) < _INT64_SAFE else object

    def measure_table(self, factor: int = 1) -> np.ndarray:
        dt = self.dtype(factor)
        mu = np.zeros(1, dtype=dt)
        for w in self.w:
            mu = np.concatenate([mu, mu + w])
        return mu

    def saturation_table(self) -> np.ndarray:
        sat = np.zeros(1, dtype=np.int64)
        for m in self.nbr:
            sat = np.concatenate([sat, sat | m])
        return sat

    def masks(self) -> np.ndarray:
        return np.arange(1 << self.n, dtype=np.int64)

    def to_atoms(self, mask: int) -> frozenset[int]:
        return frozenset(self.atoms[i] for i in bits(int(mask)))

    def to_mask(self, atoms) -> int:
        m = 0
        for a in atoms:
            m |= 1 << self.pos[a]
        return m

    def mask_measure(self, mask: int) -> int:
        return sum(self.w[i] for i in bits(mask))

    def mask_saturate(self, mask: int) -> int:
        out = 0
        for i in bits(mask):
            out |= self.nbr[i]
        return out


def le_scaled(b, a, c: Fraction):
    """Elementwise b <= c·a for integer arrays."""
    return b * c.denominator <= a * c.numerator


def argmin_ratio(num, den, candidates) -> tuple[int, Fraction] | None:
    """Exact minimiser of num/den over candidate masks; ties go to the lexicographic minimum."""
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return None
    nf = num[idx].astype(float)
    df = den[idx].astype(float)
    rf = nf / df
    lo = rf.min()
    near = idx[rf <= lo * (1 + 1e-9) + 1e-300]
    best = None
    best_masks = []
    for m in near:
        r = Fraction(int(num[m]), int(den[m]))
        if best is None or r < best:
            best, best_masks = r, [int(m)]
        elif r == best:
            best_masks.append(int(m))
    return lex_min(best_masks), best
