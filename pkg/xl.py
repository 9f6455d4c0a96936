"""XL attack on a filter generator: composition, linearization, recovery.

Attack matrices have one column per monomial of degree <= D in the n state
variables, in decreasing degrevlex with the constant monomial last, so the
final column is the right-hand side and the degree-1 unknowns x1..xn are the
columns just before it.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from anf import BoolPoly, monomial_count, monomial_masks_up_to, substitute
from annihilators import AnnihilatorBasis
from ciphers import CipherSpec, LinearUpdateMatrix, WORD_BITS, WordState, update_matrix
from errors import AnalysisError, InconsistentSystemError, ResourceError, UsageError
from gf2matrix import (WORD, WORD_DTYPE, BitMatrix, EchelonAccumulator, EchelonResult, rref,
                       solve_affine, words_for)
from resource_monitor import check_budget
from workers import WorkerPool

log = logging.getLogger("XL")

# monomials are packed into one uint64 when linearizing
MAX_LINEARIZE_VARS = 64
DEFAULT_ENUM_CAP = 20


# ==== COMPOSITION ====

@dataclass(frozen=True)
class LinearFormSet:
    """Bit j of the filter word at `clock`, as a linear form over x1..xn.

    Form bit k is the coefficient of x_{k+1}; the update is linear, so the
    constant coordinate is always 0.
    """

    clock: int
    n: int
    forms: Tuple[int, ...]
    constant: int = 0

    def evaluate(self, state_bits: int) -> int:
        word = 0
        for j, f in enumerate(self.forms):
            word |= ((f & state_bits).bit_count() & 1) << j
        return word


def _unit_forms(spec: CipherSpec) -> Tuple[int, ...]:
    base = WORD_BITS * spec.filter_word
    return tuple(1 << (base + j) for j in range(WORD_BITS))


def tap_forms(M: LinearUpdateMatrix, i: int, spec: CipherSpec) -> LinearFormSet:
    """Filter-word rows of M^i, by iterating v <- v^T M on the 7 unit rows."""
    if i < 0:
        raise UsageError("clock must be non-negative")
    forms = _unit_forms(spec)
    for _ in range(i):
        forms = tuple(M.row_times(v) for v in forms)
    return LinearFormSet(i, spec.n, forms)


def iter_tap_forms(M: LinearUpdateMatrix, spec: CipherSpec, t: int):
    forms = _unit_forms(spec)
    for i in range(t):
        yield LinearFormSet(i, spec.n, forms)
        forms = tuple(M.row_times(v) for v in forms)


def _single_bits(v: int) -> List[int]:
    out = []
    k = 0
    while v:
        if v & 1:
            out.append(1 << k)
        v >>= 1
        k += 1
    return out


def _odd_multiplicity(values: np.ndarray) -> np.ndarray:
    if values.size == 0:
        return values
    uniq, counts = np.unique(values, return_counts=True)
    return uniq[(counts & 1).astype(bool)]


class Composer:
    """f(forms) for many f over one set of forms; monomial images are memoized.

    image(S) = image(S minus its top variable) * form(top variable).
    """

    def __init__(self, forms: LinearFormSet):
        self.forms = forms
        self.n = forms.n
        self.fast = self.n <= MAX_LINEARIZE_VARS
        if self.fast:
            self._lin = [np.array(_single_bits(f), dtype=np.uint64) for f in forms.forms]
            self._cache: Dict[int, object] = {0: np.zeros(1, dtype=np.uint64)}
        else:
            self._lin = [frozenset(_single_bits(f)) for f in forms.forms]
            self._cache = {0: frozenset([0])}

    def image(self, mask: int):
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        top = mask.bit_length() - 1
        rest = self.image(mask ^ (1 << top))
        if self.fast:
            lin = self._lin[top]
            if rest.size == 0 or lin.size == 0:
                img = np.zeros(0, dtype=np.uint64)
            else:
                img = _odd_multiplicity((rest[:, None] | lin[None, :]).ravel())
        else:
            acc = set()
            for a in rest:
                for b in self._lin[top]:
                    acc ^= {a | b}
            img = frozenset(acc)
        self._cache[mask] = img
        return img

    def compose(self, f: BoolPoly) -> BoolPoly:
        if f.nvars != len(self.forms.forms):
            raise UsageError(f"polynomial has {f.nvars} variables, {len(self.forms.forms)} forms given")
        if self.fast:
            parts = [self.image(m) for m in f.support]
            if not parts:
                return BoolPoly.zero(self.n)
            merged = _odd_multiplicity(np.concatenate(parts))
            return BoolPoly((int(x) for x in merged), self.n)
        acc = set()
        for m in f.support:
            acc ^= set(self.image(m))
        return BoolPoly(acc, self.n)


def compose(f: BoolPoly, forms: LinearFormSet) -> BoolPoly:
    """f with x_j replaced by form j, reduced square-free."""
    return Composer(forms).compose(f)


# ==== SYSTEM (5) ====

@dataclass(frozen=True)
class AttackSystem:
    """Equations f(L^i(x)) = 0; tags[k] = (clock, basis index, keystream bit)."""

    spec_name: str
    n: int
    equations: Tuple[BoolPoly, ...]
    tags: Tuple[Tuple[int, int, int], ...]
    keystream: Tuple[int, ...]

    @property
    def t(self) -> int:
        return len(self.keystream)

    @property
    def max_degree(self) -> int:
        return max((int(e.degree) for e in self.equations if not e.is_zero), default=0)


def _side_basis(bases, z: int) -> AnnihilatorBasis:
    basis = bases[z]
    if basis.unit:
        raise InconsistentSystemError(f"the filter never outputs {z}, but the keystream contains it")
    if not basis.gb_prime:
        raise AnalysisError(f"no annihilators for keystream bit {z}")
    return basis


def build_attack_system(spec: CipherSpec, bases, keystream: Sequence[int], threads: Optional[int] = None,
                        progress: bool = False) -> AttackSystem:
    """Compose G'_{z_i} with the tap forms of every clock i < len(keystream).

    `bases` maps the keystream bit (0/1) to its AnnihilatorBasis.
    """
    z = tuple(int(b) & 1 for b in keystream)
    for bit in set(z):
        _side_basis(bases, bit)
    M = update_matrix(spec)
    clocks = list(iter_tap_forms(M, spec, len(z)))

    def per_clock(forms: LinearFormSet):
        zi = z[forms.clock]
        composer = Composer(forms)
        return [(composer.compose(g), (forms.clock, j, zi))
                for j, g in enumerate(bases[zi].gb_prime)]

    results = WorkerPool(threads, name="compose").map(per_clock, clocks, progress=progress)
    equations = []
    tags = []
    for chunk in results:
        for eq, tag in chunk:
            equations.append(eq)
            tags.append(tag)
    log.info("system: %d equations over %d clocks", len(equations), len(z))
    return AttackSystem(spec.name, spec.n, tuple(equations), tuple(tags), z)


# ==== LINEARIZATION ====

class MonomialIndex:
    """Column map for monomials of degree <= D in n variables."""

    def __init__(self, n: int, D: int):
        _check_linearizable(n)
        self.n = n
        self.D = min(D, n)
        ascending = monomial_masks_up_to(n, D)
        self.masks = np.array(ascending[::-1], dtype=np.uint64)
        self._order = np.argsort(self.masks, kind="stable")
        self._sorted = self.masks[self._order]

    @property
    def T(self) -> int:
        return int(self.masks.size)

    @property
    def constant_column(self) -> int:
        return self.T - 1

    def degree1_columns(self) -> List[int]:
        """Columns of x1..xn, in variable order."""
        return [self.T - 1 - self.n + k for k in range(self.n)]

    def column_of(self, masks: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self._sorted, masks)
        pos = np.minimum(pos, self._sorted.size - 1)
        if not np.array_equal(self._sorted[pos], masks):
            raise UsageError(f"monomial of degree > {self.D} in the linearized system")
        return self._order[pos]

    def monomial_values(self, state_bits: int) -> np.ndarray:
        """Packed row of all monomial values at a state (constant column = 1)."""
        s = np.uint64(state_bits)
        vals = (self.masks & s) == self.masks
        packed = np.packbits(vals, bitorder="little")
        buf = np.zeros(words_for(self.T) * 8, dtype=np.uint8)
        buf[:packed.size] = packed
        return buf.view(WORD_DTYPE)


@dataclass
class Multipliers:
    n: int
    _cache: Dict[int, np.ndarray] = field(default_factory=dict)

    def up_to(self, k: int) -> np.ndarray:
        if k not in self._cache:
            self._cache[k] = np.array(monomial_masks_up_to(self.n, max(k, 0)), dtype=np.uint64)
        return self._cache[k]


def linearization_rows(n: int, degrees: Sequence[int], D: int) -> int:
    """Rows before deduplication: sum over equation degrees of |M_{<=D-deg}|."""
    return sum(monomial_count(n, D - int(d)) for d in degrees if 0 <= d <= D)


def linearization_bytes(n: int, degrees: Sequence[int], D: int) -> int:
    return linearization_rows(n, degrees, D) * words_for(monomial_count(n, D)) * 8


def _check_linearizable(n: int):
    if n > MAX_LINEARIZE_VARS:
        raise ResourceError(f"linearization packs monomials in 64 bits; n={n} is too large",
                            advice="the full-size attack is estimated only (use `estimate`)")


def check_attack_size(spec: CipherSpec, bases, keystream: Sequence[int], D: int,
                      memory_cap: Optional[int] = None, streaming: bool = False) -> int:
    """Fail before composing when the attack matrix cannot be built.

    Composed equations have at most the degree of their annihilator, so the
    row count from annihilator degrees is a lower bound. Returns that many bytes.
    """
    _check_linearizable(spec.n)
    degrees = []
    for bit in (int(b) & 1 for b in keystream):
        degrees.extend(int(g.degree) for g in _side_basis(bases, bit).gb_prime)
    required = linearization_bytes(spec.n, degrees, D)
    if not streaming:
        check_budget(required, memory_cap, what=f"XL matrix for {len(keystream)} clocks at D={D}")
    return required


def _fill_rows(data: np.ndarray, start: int, eq: BoolPoly, mult: np.ndarray, index: MonomialIndex) -> int:
    support = np.fromiter(eq.support, dtype=np.uint64, count=len(eq.support))
    prod = mult[:, None] | support[None, :]
    cols = index.column_of(prod.ravel()).astype(np.int64)
    rows = np.repeat(np.arange(start, start + mult.size), support.size)
    bits = np.left_shift(np.uint64(1), (cols % WORD).astype(np.uint64))
    np.bitwise_xor.at(data, (rows, cols // WORD), bits)
    return mult.size


def _equation_offsets(sys: AttackSystem, D: int, mult: Multipliers):
    offsets = []
    r = 0
    for e in sys.equations:
        if e.is_zero or e.degree > D:
            offsets.append(None)
            continue
        offsets.append(r)
        r += mult.up_to(D - int(e.degree)).size
    return offsets, r


def xl_multiply_linearize(sys: AttackSystem, D: int, memory_cap: Optional[int] = None, threads: Optional[int] = None,
                          progress: bool = False, dedup: bool = True) -> Tuple[BitMatrix, MonomialIndex]:
    """Multiply every equation by all monomials of degree <= D - deg and linearize."""
    if sys.equations and D < sys.max_degree:
        raise UsageError(f"D={D} is below the equation degree {sys.max_degree}")
    index = MonomialIndex(sys.n, D)
    mult = Multipliers(sys.n)
    offsets, nrows = _equation_offsets(sys, D, mult)
    nwords = words_for(index.T)
    required = nrows * nwords * 8 * (2 if dedup else 1)
    check_budget(required, memory_cap, what=f"XL matrix of {nrows} x {index.T}")
    data = np.zeros((nrows, nwords), dtype=WORD_DTYPE)

    def fill(k: int):
        start = offsets[k]
        eq = sys.equations[k]
        return _fill_rows(data, start, eq, mult.up_to(D - int(eq.degree)), index)

    todo = [k for k, off in enumerate(offsets) if off is not None]
    for k in {D - int(sys.equations[j].degree) for j in todo}:
        mult.up_to(k)
    WorkerPool(threads, name="linearize").map(fill, todo, progress=progress)

    if dedup and nrows:
        data = np.unique(data, axis=0)
        if not data[0].any():
            data = data[1:]
    log.info("linearized: %d rows (%d generated) x %d columns", data.shape[0], nrows, index.T)
    return BitMatrix(data.shape[0], index.T, np.ascontiguousarray(data)), index


def xl_linearize_streaming(sys: AttackSystem, D: int, memory_cap: Optional[int] = None,
                           batch_equations: int = 64, progress: bool = False) -> Tuple[EchelonResult, MonomialIndex, int]:
    """Memory-constrained variant: rows are eliminated batch by batch as generated."""
    index = MonomialIndex(sys.n, D)
    mult = Multipliers(sys.n)
    acc = EchelonAccumulator(index.T, memory_cap=memory_cap)
    todo = [e for e in sys.equations if not e.is_zero and e.degree <= D]
    generated = 0
    for lo in range(0, len(todo), batch_equations):
        chunk = todo[lo:lo + batch_equations]
        sizes = [mult.up_to(D - int(e.degree)).size for e in chunk]
        data = np.zeros((sum(sizes), words_for(index.T)), dtype=WORD_DTYPE)
        r = 0
        for e in chunk:
            r += _fill_rows(data, r, e, mult.up_to(D - int(e.degree)), index)
        generated += r
        acc.add_rows(data)
        if progress:
            log.info("streaming: %d/%d equations, rank %d", lo + len(chunk), len(todo), acc.rank)
    log.info("streaming elimination: rank %d from %d generated rows", acc.rank, generated)
    return acc.result(), index, generated


# ==== RECOVERY ====

@dataclass
class RecoveryResult:
    status: str
    state_bits: Optional[int]
    state: Optional[WordState]
    rank: int
    residual_dimension: int
    enumerated: int = 0
    survivors: int = 0
    reason: str = ""

    @property
    def success(self) -> bool:
        return self.status in ("unique", "enumerated")

    def to_dict(self) -> dict:
        return {
            'status': self.status,
            'state_hex': self.state.to_hex() if self.state else None,
            'rank': self.rank,
            'residual_dimension': self.residual_dimension,
            'enumerated': self.enumerated,
            'survivors': self.survivors,
            'reason': self.reason
        }


def system_residual(rows: BitMatrix, index: MonomialIndex, state_bits: int) -> int:
    """Rows not satisfied by the monomial expansion of a state."""
    if rows.rows == 0:
        return 0
    values = index.monomial_values(state_bits)
    parity = np.bitwise_count(rows.data & values).sum(axis=1) & 1
    return int(parity.sum())


def keystream_filter(spec: CipherSpec, candidates: np.ndarray, keystream: Sequence[int]) -> np.ndarray:
    """Candidates (uint64 state bits) whose keystream matches, checked clock by clock."""
    table = spec.filter_table()
    M = update_matrix(spec)
    alive = np.asarray(candidates, dtype=np.uint64)
    for forms in iter_tap_forms(M, spec, len(keystream)):
        if alive.size == 0:
            break
        word = np.zeros(alive.size, dtype=np.int64)
        for j, f in enumerate(forms.forms):
            word |= (np.bitwise_count(alive & np.uint64(f)).astype(np.int64) & 1) << j
        alive = alive[table[word] == (keystream[forms.clock] & 1)]
    return alive


def _span(particular: int, basis: Sequence[int]) -> np.ndarray:
    out = np.array([particular], dtype=np.uint64)
    for b in basis:
        out = np.concatenate([out, out ^ np.uint64(b)])
    return out


def solve_and_recover(system: Union[BitMatrix, EchelonResult], index: MonomialIndex, spec: CipherSpec,
                      keystream: Sequence[int], enum_cap: Optional[int] = None, memory_cap: Optional[int] = None,
                      progress: bool = False) -> RecoveryResult:
    """Project the affine solution set on x1..xn, enumerate it, verify by keystream."""
    if enum_cap is None:
        enum_cap = int(os.getenv("FILTERXL_ENUM_CAP", DEFAULT_ENUM_CAP))
    n = index.n
    if isinstance(system, BitMatrix) and system.rows == 0:
        return RecoveryResult("failed", None, None, 0, n, reason="no equations")
    ech = system if isinstance(system, EchelonResult) else rref(system, progress=progress,
                                                                memory_cap=memory_cap)
    if ech.rank == 0:
        return RecoveryResult("failed", None, None, 0, n, reason="no equations")
    sol = solve_affine(ech, rhs_included=True, project=index.degree1_columns())
    if not sol.consistent:
        raise InconsistentSystemError("linearized system is inconsistent: wrong keystream or a bug")
    k = sol.dimension
    log.info("rank %d; solution set on x1..x%d has dimension %d", ech.rank, n, k)
    if k > enum_cap:
        return RecoveryResult("failed", None, None, ech.rank, k,
                              reason=f"residual dimension {k} exceeds the enumeration cap {enum_cap}")

    candidates = _span(sol.particular, sol.basis)
    alive = keystream_filter(spec, candidates, keystream)
    survivors = [int(s) for s in alive if system_residual(ech.reduced, index, int(s)) == 0]
    status = "unique" if k == 0 else "enumerated"
    if len(survivors) == 1:
        bits = survivors[0]
        return RecoveryResult(status, bits, WordState.from_bits(bits, spec.a), ech.rank, k,
                              enumerated=int(candidates.size), survivors=1)
    reason = ("no candidate reproduces the keystream" if not survivors
              else f"{len(survivors)} candidates reproduce the keystream")
    return RecoveryResult("failed", None, None, ech.rank, k, enumerated=int(candidates.size),
                          survivors=len(survivors), reason=reason)


def rank_report(rank: int, t: int, k_prime: int, rows: int, T: int, generated: Optional[int] = None) -> dict:
    """Measured rank against the t*k' estimate."""
    estimate = t * k_prime
    return {
        'rank': rank,
        'estimated_t_k': estimate,
        'ratio': round(rank / estimate, 4) if estimate else None,
        'rows_after_dedup': rows,
        'rows_generated': generated,
        'T': T,
        'rank_convention': "rank of the deduplicated linearized matrix"
    }


# ==== TEXTBOOK XL ====

@dataclass
class GenericXLResult:
    status: str
    solution: Dict[int, int] = field(default_factory=dict)
    reason: str = ""
    rounds: int = 0

    @property
    def success(self) -> bool:
        return self.status == "solved"

    def as_point(self, n: int) -> Tuple[int, ...]:
        return tuple(self.solution.get(v, 0) for v in range(1, n + 1))


def _xl_round(equations: List[BoolPoly], free_mask: int, n: int, D: int, var: int):
    """One multiply/linearize/eliminate pass; returns the value of x_var or None."""
    bit = 1 << (var - 1)
    ascending = [mk for mk in monomial_masks_up_to(n, D) if mk & ~free_mask == 0]
    others = [mk for mk in reversed(ascending) if mk not in (0, bit)]
    columns = others + [bit, 0]
    col = {mk: c for c, mk in enumerate(columns)}
    rows = []
    for e in equations:
        if e.is_zero:
            continue
        for u in ascending:
            if u.bit_count() > D - e.degree:
                continue
            v = 0
            for mk in e.support:
                v ^= 1 << col[u | mk]
            if v:
                rows.append(v)
    if not rows:
        return None, "no equations left"
    ech = rref(BitMatrix.from_int_rows(rows, len(columns)))
    if ech.pivot_cols and ech.pivot_cols[-1] == col[0]:
        return None, "inconsistent system"
    for r, c in enumerate(ech.pivot_cols):
        if c == col[bit]:
            return ech.reduced.get(r, col[0]), ""
    return None, f"no univariate equation in x{var}"


def generic_xl(equations: Sequence[BoolPoly], D: int, eliminate_last: int = 1) -> GenericXLResult:
    """Textbook XL: find a univariate equation, substitute, repeat."""
    eqs = [e for e in equations if not e.is_zero]
    if not eqs:
        return GenericXLResult("failed", reason="no equations")
    n = eqs[0].nvars
    degrees = {int(e.degree) for e in eqs}
    if len(degrees) != 1:
        raise UsageError(f"generic XL needs equations of equal degree, got {sorted(degrees)}")
    if degrees.pop() > D:
        raise UsageError("D is below the equation degree")
    if not 1 <= eliminate_last <= n:
        raise UsageError(f"x{eliminate_last} outside 1..{n}")

    order = [eliminate_last] + [v for v in range(1, n + 1) if v != eliminate_last]
    free_mask = (1 << n) - 1
    solution = {}
    for rounds, var in enumerate(order, start=1):
        value, reason = _xl_round(eqs, free_mask, n, D, var)
        if value is None:
            return GenericXLResult("failed", solution, reason, rounds)
        solution[var] = value
        free_mask &= ~(1 << (var - 1))
        eqs = [substitute(e, var, value) for e in eqs]
        if any(e.support == frozenset([0]) for e in eqs):
            return GenericXLResult("failed", solution, "inconsistent after substitution", rounds)
    return GenericXLResult("solved", solution, "", len(order))
