"""Annihilator ideals of a filter function and the sets derived from them.

For side s, I_s is the ideal of Boolean polynomials vanishing on
Z_s = {v : F(v) = s}; side 0 members annihilate F + 1, side 1 members
annihilate F. Both ideals are vanishing ideals of finite point sets, so
their reduced degrevlex Groebner bases come straight out of
Buchberger-Moeller linear algebra on evaluation vectors.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from anf import (BoolPoly, degrevlex_key, monomial_masks_up_to, mul_reduced, normal_form,
                 to_truth_table)
from errors import AnalysisError, UsageError
from gf2matrix import BitMatrix, max_independent_rows, solve_affine

log = logging.getLogger("ANNIHILATOR")

MAX_FILTER_VARS = 16


@dataclass(frozen=True)
class AnnihilatorBasis:
    """Square-free part G' of the reduced Groebner basis of I_side."""

    side: int
    m: int
    gb: Tuple[BoolPoly, ...]
    gb_prime: Tuple[BoolPoly, ...]
    filter_degree: int
    unit: bool = False
    generates: bool = True

    @property
    def max_degree(self) -> int:
        return max((g.degree for g in self.gb_prime), default=0)

    def degree_histogram(self, which: str = "gb_prime") -> Dict[int, int]:
        polys = self.gb_prime if which == "gb_prime" else self.gb
        return dict(sorted(Counter(int(g.degree) for g in polys).items()))

    def report(self) -> dict:
        return {
            'side': self.side,
            'unit_ideal': self.unit,
            'gb_size': len(self.gb),
            'gb_histogram': self.degree_histogram("gb"),
            'gb_prime_size': len(self.gb_prime),
            'gb_prime_histogram': self.degree_histogram(),
            'generates': self.generates
        }


@dataclass(frozen=True)
class ExpandedSet:
    """Distinct products x^alpha * g with degree <= D; origins[i] = (gb index, multiplier mask)."""

    side: int
    m: int
    D: int
    polys: Tuple[BoolPoly, ...]
    origins: Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class IndependentSet:
    side: int
    m: int
    D: int
    polys: Tuple[BoolPoly, ...]
    degree_histogram: Dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.polys)

    def truncated(self, D: int) -> "IndependentSet":
        """Members of degree <= D (the set an expansion to D would select)."""
        kept = tuple(p for p in self.polys if p.degree <= D)
        return IndependentSet(self.side, self.m, min(D, self.D), kept, _histogram(kept))


def _histogram(polys) -> Dict[int, int]:
    return dict(sorted(Counter(int(p.degree) for p in polys).items()))


def _check_filter(F: BoolPoly, side: Optional[int] = None):
    if F.nvars > MAX_FILTER_VARS:
        raise UsageError(f"filters are limited to {MAX_FILTER_VARS} variables, got {F.nvars}")
    if side is not None and side not in (0, 1):
        raise UsageError(f"side must be 0 or 1, got {side}")


def variety(F: BoolPoly, side: int) -> np.ndarray:
    """Points (as masks) where F takes the value `side`."""
    values = to_truth_table(F).values
    return np.flatnonzero(values == side)


def _point_vectors(points: np.ndarray, m: int) -> List[int]:
    """Per-variable evaluation vectors over the point list, as ints."""
    vectors = []
    for i in range(m):
        bits = ((points >> i) & 1).astype(np.uint8)
        packed = np.packbits(bits, bitorder="little").tobytes()
        vectors.append(int.from_bytes(packed, "little"))
    return vectors


def reduced_gb_of_annihilator_ideal(F: BoolPoly, side: int) -> AnnihilatorBasis:
    """Buchberger-Moeller over the variety Z_side, monomials in ascending degrevlex."""
    _check_filter(F, side)
    m = F.nvars
    points = variety(F, side)
    fdeg = int(F.degree) if not F.is_zero else 0
    if points.size == 0:
        log.warning("side %d variety is empty: unit ideal, no usable annihilators", side)
        one = BoolPoly.one(m)
        return AnnihilatorBasis(side, m, (one,), (one,), fdeg, unit=True)

    ones = (1 << points.size) - 1
    var_vec = _point_vectors(points, m)
    # echelon basis of standard-monomial evaluations: lowest set bit -> (vector, combination)
    echelon: Dict[int, Tuple[int, int]] = {}
    standard: List[int] = []
    leads: List[int] = []
    gb: List[BoolPoly] = []

    for t in monomial_masks_up_to(m, m):
        if any(lm & t == lm for lm in leads):
            continue
        v = ones
        for i in range(m):
            if t >> i & 1:
                v &= var_vec[i]
        combo = 0
        while v:
            low = v & -v
            if low not in echelon:
                break
            bv, bc = echelon[low]
            v ^= bv
            combo ^= bc
        if v:
            echelon[v & -v] = (v, combo | (1 << len(standard)))
            standard.append(t)
        else:
            support = [t] + [standard[k] for k in range(len(standard)) if combo >> k & 1]
            leads.append(t)
            gb.append(BoolPoly(support, m))

    gb.sort(key=lambda g: degrevlex_key(g.leading_mask))
    kept = tuple(g for g in gb if g.degree <= fdeg)
    dropped = [g for g in gb if g.degree > fdeg]
    generates = all(normal_form(g, kept).is_zero for g in dropped)
    if not generates:
        log.warning("side %d: G' does not generate the ideal", side)
    log.info("side %d: %d GB members, %d kept (deg <= %d), %d standard monomials",
             side, len(gb), len(kept), fdeg, len(standard))
    return AnnihilatorBasis(side, m, tuple(gb), kept, fdeg, unit=False, generates=generates)


def annihilator_space(F: BoolPoly, side: int, d: int) -> List[BoolPoly]:
    """Basis of {g : deg g <= d, g vanishes on Z_side}, by evaluation-matrix nullspace."""
    _check_filter(F, side)
    m = F.nvars
    masks = monomial_masks_up_to(m, d)
    points = variety(F, side)
    if points.size == 0:
        return [BoolPoly([mk], m) for mk in masks]
    cols = np.array(masks, dtype=np.int64)
    evals = (points[:, None] & cols[None, :]) == cols[None, :]
    kernel = solve_affine(BitMatrix.from_bool(evals), rhs_included=False)
    out = []
    for vec in kernel.basis:
        out.append(BoolPoly((masks[k] for k in range(len(masks)) if vec >> k & 1), m))
    return out


def algebraic_immunity(F: BoolPoly) -> int:
    """min deg of a nonzero annihilator of F or F + 1; 0 for constant F."""
    _check_filter(F)
    if F.degree <= 0:
        return 0
    for d in range(1, F.nvars + 1):
        if annihilator_space(F, 0, d) or annihilator_space(F, 1, d):
            return d
    raise AnalysisError("no annihilator found")


def expand_to_degree(basis: AnnihilatorBasis, D: int) -> ExpandedSet:
    """All distinct nonzero reduced products x^alpha * g, deg <= D."""
    if D < 0:
        raise UsageError("D must be non-negative")
    m = basis.m
    multipliers = monomial_masks_up_to(m, m)
    seen = set()
    polys = []
    origins = []
    for gi, g in enumerate(basis.gb_prime):
        if g.degree > D:
            continue
        for u in multipliers:
            p = mul_reduced(BoolPoly([u], m), g)
            if p.is_zero or p.degree > D or p in seen:
                continue
            seen.add(p)
            polys.append(p)
            origins.append((gi, u))
    log.debug("side %d: %d products up to degree %d", basis.side, len(polys), D)
    return ExpandedSet(basis.side, m, D, tuple(polys), tuple(origins))


def independent_subset(s: ExpandedSet) -> IndependentSet:
    """Greedy maximal independent subset, ascending (degree, leading monomial)."""
    order = sorted(range(len(s.polys)),
                   key=lambda i: (s.polys[i].degree, degrevlex_key(s.polys[i].leading_mask)))
    vectors = []
    for i in order:
        v = 0
        for mk in s.polys[i].support:
            v |= 1 << mk
        vectors.append(v)
    kept = tuple(s.polys[order[k]] for k in max_independent_rows(vectors))
    return IndependentSet(s.side, s.m, s.D, kept, _histogram(kept))


def analyze_filter(F: BoolPoly, D: Optional[int] = None) -> Dict[int, Tuple[AnnihilatorBasis, IndependentSet]]:
    """Both sides: G' and the independent set of the full expansion (D defaults to m)."""
    D = F.nvars if D is None else D
    out = {}
    for side in (0, 1):
        basis = reduced_gb_of_annihilator_ideal(F, side)
        out[side] = (basis, independent_subset(expand_to_degree(basis, D)))
    return out
