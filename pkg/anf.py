"""Boolean polynomials in algebraic normal form.

Monomials are square-free, so a monomial is just the set of its variables.
We store that set as an int bitmask: variable x_{i+1} is bit i. Products are
bitwise OR, degree is popcount, and the ANF coefficient of a truth-table
entry with index p belongs to the monomial whose mask is p.
"""
import functools
import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np

from errors import ResourceError, SpecParseError, UsageError

log = logging.getLogger("ANF")

# deg(0); compares below every integer so max() over degrees is total
NEG_INF_DEGREE = float("-inf")

MAX_TRUTH_TABLE_VARS = 24


def degrevlex_key(mask: int):
    """Sort key: ascending key == ascending degrevlex.

    Within one degree the monomial holding the highest differing variable is
    the smaller one, i.e. the larger mask sorts first.
    """
    return (mask.bit_count(), -mask)


@functools.total_ordering
@dataclass(frozen=True)
class Monomial:
    """Square-free monomial; `mask` bit i stands for x_{i+1}."""

    mask: int = 0

    @classmethod
    def from_vars(cls, variables: Iterable[int]) -> "Monomial":
        mask = 0
        for v in variables:
            if v < 1:
                raise UsageError(f"variable indices are 1-based, got {v}")
            mask |= 1 << (v - 1)
        return cls(mask)

    @property
    def vars(self) -> frozenset:
        return frozenset(i + 1 for i in _bits(self.mask))

    @property
    def degree(self) -> int:
        return self.mask.bit_count()

    def divides(self, other: "Monomial") -> bool:
        return self.mask & other.mask == self.mask

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(self.mask | other.mask)

    def __lt__(self, other: "Monomial") -> bool:
        return degrevlex_key(self.mask) < degrevlex_key(other.mask)

    def __str__(self) -> str:
        return format_monomial(self.mask)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def format_monomial(mask: int) -> str:
    if mask == 0:
        return "1"
    return "*".join(f"x{i + 1}" for i in _bits(mask))


class BoolPoly:
    """Element of F2[x1..xn]/L_n, kept as the set of monomial masks in its support."""

    __slots__ = ("support", "nvars", "_hash")

    def __init__(self, support: Iterable[int] = (), nvars: int = 0):
        self.support = frozenset(support)
        self.nvars = nvars
        self._hash = None
        if self.support and nvars < max(self.support).bit_length():
            raise UsageError(f"support uses more than {nvars} variables")

    # constructors

    @classmethod
    def zero(cls, nvars: int) -> "BoolPoly":
        return cls((), nvars)

    @classmethod
    def one(cls, nvars: int) -> "BoolPoly":
        return cls((0,), nvars)

    @classmethod
    def var(cls, index: int, nvars: int) -> "BoolPoly":
        if not 1 <= index <= nvars:
            raise UsageError(f"x{index} outside 1..{nvars}")
        return cls((1 << (index - 1),), nvars)

    @classmethod
    def from_toggles(cls, masks: Iterable[int], nvars: int) -> "BoolPoly":
        """Sum a list of monomials with GF(2) cancellation of repeats."""
        acc = set()
        for m in masks:
            if m in acc:
                acc.remove(m)
            else:
                acc.add(m)
        return cls(acc, nvars)

    # properties

    @property
    def degree(self):
        if not self.support:
            return NEG_INF_DEGREE
        return max(m.bit_count() for m in self.support)

    @property
    def is_zero(self) -> bool:
        return not self.support

    @property
    def leading_mask(self) -> int:
        if not self.support:
            raise UsageError("the zero polynomial has no leading monomial")
        return max(self.support, key=degrevlex_key)

    # arithmetic

    def __add__(self, other: "BoolPoly") -> "BoolPoly":
        return add(self, other)

    def __mul__(self, other: "BoolPoly") -> "BoolPoly":
        return mul_reduced(self, other)

    def __call__(self, point: Sequence[int]) -> int:
        return evaluate(self, point)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoolPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.support == other.support

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, self.support))
        return self._hash

    def __len__(self) -> int:
        return len(self.support)

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return f"BoolPoly({format_poly(self)!r}, nvars={self.nvars})"


def _check_same_ring(p: BoolPoly, q: BoolPoly):
    if p.nvars != q.nvars:
        raise UsageError(f"polynomials live in different rings: {p.nvars} vs {q.nvars} variables")


def add(p: BoolPoly, q: BoolPoly) -> BoolPoly:
    _check_same_ring(p, q)
    return BoolPoly(p.support ^ q.support, p.nvars)


def mul_reduced(p: BoolPoly, q: BoolPoly) -> BoolPoly:
    """Product modulo the field equations: x_i^2 -> x_i."""
    _check_same_ring(p, q)
    return BoolPoly.from_toggles((a | b for a in p.support for b in q.support), p.nvars)


def evaluate(p: BoolPoly, point: Sequence[int]) -> int:
    if len(point) != p.nvars:
        raise UsageError(f"point has {len(point)} coordinates, polynomial has {p.nvars} variables")
    pm = 0
    for i, bit in enumerate(point):
        if bit & 1:
            pm |= 1 << i
    return evaluate_mask(p, pm)


def evaluate_mask(p: BoolPoly, point_mask: int) -> int:
    """Evaluate at the point whose set coordinates are the bits of point_mask."""
    value = 0
    for m in p.support:
        if m & point_mask == m:
            value ^= 1
    return value


def substitute(p: BoolPoly, index: int, value: int) -> BoolPoly:
    """Fix x_index to a constant."""
    bit = 1 << (index - 1)
    if value & 1:
        return BoolPoly.from_toggles((m & ~bit for m in p.support), p.nvars)
    return BoolPoly((m for m in p.support if not m & bit), p.nvars)


def normal_form(p: BoolPoly, basis: Sequence[BoolPoly]) -> BoolPoly:
    """Remainder of p modulo basis + field equations (degrevlex division)."""
    leads = [(g.leading_mask, g) for g in basis if not g.is_zero]
    work = set(p.support)
    remainder = set()
    while work:
        lm = max(work, key=degrevlex_key)
        for glm, g in leads:
            if glm & lm == glm:
                q = lm & ~glm
                for t in g.support:
                    work ^= {q | t}
                break
        else:
            work.remove(lm)
            remainder.add(lm)
    return BoolPoly(remainder, p.nvars)


# ==== TRUTH TABLES ====

@dataclass(frozen=True, eq=False)
class TruthTable:
    """Values of a Boolean function; entry p holds f at x_{j+1} = bit j of p."""

    m: int
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != 1 << self.m:
            raise UsageError(f"truth table of {self.m} variables needs {1 << self.m} entries")

    @classmethod
    def from_function(cls, m: int, fn) -> "TruthTable":
        return cls(m, np.array([fn(p) & 1 for p in range(1 << m)], dtype=np.uint8))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruthTable):
            return NotImplemented
        return self.m == other.m and np.array_equal(self.values, other.values)

def _check_table_size(m: int):
    if m > MAX_TRUTH_TABLE_VARS:
        raise ResourceError(f"truth tables are limited to {MAX_TRUTH_TABLE_VARS} variables, got {m}",
                            required_bytes=1 << m)


def mobius(values: np.ndarray) -> np.ndarray:
    """In-place binary Moebius transform; it is its own inverse."""
    m = len(values).bit_length() - 1
    for j in range(m):
        v = values.reshape(-1, 2, 1 << j)
        v[:, 1, :] ^= v[:, 0, :]
    return values


def from_truth_table(t: TruthTable) -> BoolPoly:
    _check_table_size(t.m)
    coeffs = mobius(np.array(t.values, dtype=np.uint8) & 1)
    return BoolPoly((int(i) for i in np.flatnonzero(coeffs)), t.m)


def to_truth_table(p: BoolPoly) -> TruthTable:
    _check_table_size(p.nvars)
    coeffs = np.zeros(1 << p.nvars, dtype=np.uint8)
    if p.support:
        coeffs[np.fromiter(p.support, dtype=np.int64, count=len(p.support))] = 1
    return TruthTable(p.nvars, mobius(coeffs))


# ==== MONOMIAL ENUMERATION ====

def monomial_count(n: int, D: int) -> int:
    """|M_{<=D}| in n variables, exact."""
    D = min(D, n)
    return sum(comb(n, i) for i in range(D + 1))


def monomial_masks_of_degree(n: int, k: int) -> List[int]:
    """Degree-k masks in ascending degrevlex (i.e. descending mask)."""
    # combinations over a descending alphabet come out in descending mask order
    return [sum(1 << i for i in c) for c in combinations(range(n - 1, -1, -1), k)]


def monomial_masks_up_to(n: int, D: int) -> List[int]:
    if D < 0 or n < 0:
        raise UsageError(f"need 0 <= D and 0 <= n, got n={n}, D={D}")
    if D > n:
        log.debug("degree bound %d clamped to n=%d", D, n)
        D = n
    masks: List[int] = []
    for k in range(D + 1):
        masks.extend(monomial_masks_of_degree(n, k))
    return masks


def monomials_up_to(n: int, D: int) -> List[Monomial]:
    """All square-free monomials of degree <= D, strictly increasing in degrevlex.

    D > n is clamped to n.
    """
    return [Monomial(m) for m in monomial_masks_up_to(n, D)]


# ==== TEXT FORMAT ====

def format_poly(p: BoolPoly) -> str:
    if not p.support:
        return "0"
    return "+".join(format_monomial(m) for m in sorted(p.support, key=degrevlex_key, reverse=True))


def parse_poly(text: str, nvars: Optional[int] = None, source: Optional[str] = None,
               line: Optional[int] = None, col_offset: int = 0) -> BoolPoly:
    """Parse the "x1*x2+x3+1" text format. Repeated terms cancel."""
    compact = text.strip()
    if compact == "0":
        return BoolPoly.zero(nvars or 0)
    masks = []
    pos = 0
    for term in text.split("+"):
        col = col_offset + pos + 1
        pos += len(term) + 1
        term = term.strip()
        if not term:
            raise SpecParseError("empty term", line, col, source)
        if term == "1":
            masks.append(0)
            continue
        mask = 0
        for factor in term.split("*"):
            factor = factor.strip()
            if len(factor) < 2 or factor[0] != "x" or not factor[1:].isdigit() or int(factor[1:]) < 1:
                raise SpecParseError(f"bad factor {factor!r}", line, col, source)
            bit = 1 << (int(factor[1:]) - 1)
            if mask & bit:
                raise SpecParseError(f"repeated variable in term {term!r}", line, col, source)
            mask |= bit
        masks.append(mask)
    used = max((m.bit_length() for m in masks), default=0)
    if nvars is None:
        nvars = used
    elif used > nvars:
        raise SpecParseError(f"polynomial uses x{used} but only {nvars} variables are allowed",
                             line, col_offset + 1, source)
    return BoolPoly.from_toggles(masks, nvars)
