"""Dense bit-packed matrices over GF(2).

Rows are packed little-endian into 64-bit words: column c lives in word c // 64,
bit c % 64. Columns never move during elimination; pivots are tracked instead,
because in the attack a column *is* a monomial.
"""
import logging
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from errors import SpecParseError, UsageError
from resource_monitor import check_budget

log = logging.getLogger("GF2")

WORD = 64
WORD_DTYPE = np.dtype("<u8")
DUMP_MAGIC = b"FXLBM\x00v1"
_ONE = np.uint64(1)
# rows processed per gather/scatter when applying pivot combinations
_CHUNK_ROWS = 4096


def words_for(cols: int) -> int:
    return (cols + WORD - 1) // WORD


def _int_to_words(value: int, nwords: int) -> np.ndarray:
    return np.frombuffer(value.to_bytes(nwords * 8, "little"), dtype=WORD_DTYPE).copy()


def _words_to_int(words: np.ndarray) -> int:
    return int.from_bytes(np.ascontiguousarray(words, dtype=WORD_DTYPE).tobytes(), "little")


def _unpack(data: np.ndarray, cols: int) -> np.ndarray:
    raw = np.ascontiguousarray(data, dtype=WORD_DTYPE).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :cols].astype(bool)


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Immutable rows x cols matrix over GF(2); bits past `cols` are zero."""

    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.rows, words_for(self.cols)):
            raise UsageError(f"packed data shape {self.data.shape} does not match {self.rows}x{self.cols}")
        self.data.flags.writeable = False

    # constructors

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, words_for(cols)), dtype=WORD_DTYPE))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        data = np.zeros((n, words_for(n)), dtype=WORD_DTYPE)
        idx = np.arange(n)
        data[idx, idx // WORD] = _ONE << (idx % WORD).astype(WORD_DTYPE)
        return cls(n, n, data)

    @classmethod
    def from_int_rows(cls, rows: Sequence[int], cols: int) -> "BitMatrix":
        nwords = words_for(cols)
        data = np.zeros((len(rows), nwords), dtype=WORD_DTYPE)
        for i, value in enumerate(rows):
            if value >> cols:
                raise UsageError(f"row {i} has bits beyond column {cols}")
            data[i] = _int_to_words(value, nwords)
        return cls(len(rows), cols, data)

    @classmethod
    def from_bool(cls, array) -> "BitMatrix":
        array = np.atleast_2d(np.asarray(array, dtype=bool))
        rows, cols = array.shape
        nwords = words_for(cols)
        packed = np.packbits(array, axis=1, bitorder="little")
        buf = np.zeros((rows, nwords * 8), dtype=np.uint8)
        buf[:, :packed.shape[1]] = packed
        return cls(rows, cols, buf.view(WORD_DTYPE).reshape(rows, nwords))

    @classmethod
    def from_packed(cls, data: np.ndarray, cols: int) -> "BitMatrix":
        """Wrap packed words (copied); trailing bits past cols must already be zero."""
        data = np.array(data, dtype=WORD_DTYPE, copy=True).reshape(-1, words_for(cols))
        return cls(data.shape[0], cols, data)

    # accessors

    @property
    def words(self) -> int:
        return words_for(self.cols)

    @property
    def nbytes(self) -> int:
        return self.rows * self.words * 8

    def get(self, r: int, c: int) -> int:
        return int((self.data[r, c // WORD] >> np.uint64(c % WORD)) & _ONE)

    def row_int(self, r: int) -> int:
        return _words_to_int(self.data[r])

    def to_int_rows(self) -> List[int]:
        return [self.row_int(r) for r in range(self.rows)]

    def to_bool(self) -> np.ndarray:
        return _unpack(self.data, self.cols)

    def column(self, c: int) -> np.ndarray:
        return ((self.data[:, c // WORD] >> np.uint64(c % WORD)) & _ONE).astype(np.uint8)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.rows == other.rows and self.cols == other.cols and np.array_equal(self.data, other.data)

    # algebra

    def matvec(self, v: int) -> int:
        """M·v with v a column bit-vector given as an int."""
        vw = _int_to_words(v, self.words)
        parity = np.bitwise_count(self.data & vw).sum(axis=1) & 1
        out = 0
        for r in np.flatnonzero(parity):
            out |= 1 << int(r)
        return out

    def vecmat(self, v: int) -> int:
        """v^T·M, i.e. XOR of the rows selected by v."""
        idx = [i for i in range(self.rows) if v >> i & 1]
        if not idx:
            return 0
        return _words_to_int(np.bitwise_xor.reduce(self.data[idx], axis=0))

    def matmul(self, other: "BitMatrix") -> "BitMatrix":
        if self.cols != other.rows:
            raise UsageError(f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        out = np.zeros((self.rows, other.words), dtype=WORD_DTYPE)
        for i in range(self.rows):
            idx = np.flatnonzero(self.to_bool_row(i))
            if idx.size:
                out[i] = np.bitwise_xor.reduce(other.data[idx], axis=0)
        return BitMatrix(self.rows, other.cols, out)

    def to_bool_row(self, r: int) -> np.ndarray:
        return _unpack(self.data[r:r + 1], self.cols)[0]

    def power(self, e: int) -> "BitMatrix":
        if self.rows != self.cols:
            raise UsageError("only square matrices have powers")
        result = BitMatrix.identity(self.rows)
        base = self
        while e:
            if e & 1:
                result = result.matmul(base)
            e >>= 1
            if e:
                base = base.matmul(base)
        return result

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_bool(self.to_bool().T)


@dataclass(frozen=True)
class EchelonResult:
    """RREF of a matrix: `reduced` holds the rank nonzero rows, in pivot order."""

    rank: int
    pivot_cols: Tuple[int, ...]
    reduced: BitMatrix

    def pivot_row_of(self) -> dict:
        return {c: i for i, c in enumerate(self.pivot_cols)}


@dataclass(frozen=True)
class AffineSolutionSet:
    """particular + span(basis), over `coords` (all unknowns when coords is None)."""

    particular: int
    basis: Tuple[int, ...]
    consistent: bool
    nvars: int
    coords: Optional[Tuple[int, ...]] = None

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def members(self, limit: int = 1 << 20):
        if not self.consistent:
            return
        if self.dimension > limit.bit_length():
            raise UsageError(f"solution set of dimension {self.dimension} is too large to list")
        for k in range(1 << self.dimension):
            v = self.particular
            for j, b in enumerate(self.basis):
                if k >> j & 1:
                    v ^= b
            yield v


# ==== ELIMINATION ====

def _xor_combinations(target: np.ndarray, start: int, codes: np.ndarray, pivots: np.ndarray):
    """target[i, start:] ^= sum of pivots[j] over the bits j of codes[i].

    Four-Russians style: pivots are taken 8 at a time and every combination
    of a group is tabulated once, so each row costs one XOR per group.
    """
    k = pivots.shape[0]
    for g in range(0, k, 8):
        size = min(8, k - g)
        table = np.zeros((1 << size, pivots.shape[1]), dtype=WORD_DTYPE)
        for t in range(size):
            table[1 << t:2 << t] = table[:1 << t] ^ pivots[g + t]
        idx = ((codes >> np.uint64(g)) & np.uint64((1 << size) - 1)).astype(np.intp)
        sel = np.flatnonzero(idx)
        for lo in range(0, sel.size, _CHUNK_ROWS):
            chunk = sel[lo:lo + _CHUNK_ROWS]
            target[chunk, start:] ^= table[idx[chunk]]


def _eliminate(data: np.ndarray, cols: int, progress: bool = False) -> List[int]:
    """In-place Gauss-Jordan. Pivot rows end up on top in pivot order; the rest is zero.

    Columns are processed one word at a time: pivots inside the word are found
    on that single word column, while the row operations they imply are
    recorded as bit masks and applied to the remaining words in one pass.
    """
    nrows, nwords = data.shape
    pivot_cols: List[int] = []
    r = 0
    for w in tqdm(range(nwords), disable=not progress, desc="[GF2] eliminating", unit="word",
                  leave=False):
        if r >= nrows:
            break
        word = data[:, w].copy()
        combo = np.zeros(nrows, dtype=WORD_DTYPE)
        slots: List[int] = []
        for b in range(min(WORD, cols - w * WORD)):
            bit = _ONE << np.uint64(b)
            below = np.flatnonzero(word[r:] & bit)
            if below.size == 0:
                continue
            p = r + int(below[0])
            if p != r:
                data[[r, p]] = data[[p, r]]
                word[[r, p]] = word[[p, r]]
                combo[[r, p]] = combo[[p, r]]
            combo[r] ^= _ONE << np.uint64(len(slots))
            hits = np.flatnonzero(word & bit)
            hits = hits[hits != r]
            if hits.size:
                word[hits] ^= word[r]
                combo[hits] ^= combo[r]
            slots.append(r)
            pivot_cols.append(w * WORD + b)
            r += 1
            if r == nrows:
                break
        data[:, w] = word
        if slots and w + 1 < nwords:
            pivots = data[slots, w + 1:].copy()
            data[slots, w + 1:] = 0
            _xor_combinations(data, w + 1, combo, pivots)
    return pivot_cols


def rref(m: BitMatrix, progress: bool = False, memory_cap: Optional[int] = None) -> EchelonResult:
    """Reduced row-echelon form. Deterministic; the input is never mutated."""
    check_budget(2 * m.nbytes, memory_cap, what=f"elimination of a {m.rows}x{m.cols} matrix")
    work = np.array(m.data, dtype=WORD_DTYPE, copy=True)
    pivots = _eliminate(work, m.cols, progress=progress)
    reduced = BitMatrix(len(pivots), m.cols, work[:len(pivots)].copy())
    log.debug("rank %d of %dx%d", len(pivots), m.rows, m.cols)
    return EchelonResult(len(pivots), tuple(pivots), reduced)


def rank(m: BitMatrix) -> int:
    return rref(m).rank


def _bits_at(data: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    """Codes whose bit t is data[:, cols[t]] (len(cols) <= 64)."""
    codes = np.zeros(data.shape[0], dtype=WORD_DTYPE)
    for t, c in enumerate(cols):
        bit = (data[:, c // WORD] >> np.uint64(c % WORD)) & _ONE
        codes |= bit << np.uint64(t)
    return codes


def _reduce_against(target: np.ndarray, pivot_rows: np.ndarray, pivot_cols: Sequence[int]):
    """Clear every pivot column in target using RREF pivot rows.

    Pivot rows are zero on each other's pivot columns, so the multipliers can
    all be read off target before any row is touched.
    """
    for g in range(0, len(pivot_cols), 8):
        group = list(pivot_cols[g:g + 8])
        codes = _bits_at(target, group)
        _xor_combinations(target, 0, codes, pivot_rows[g:g + len(group)])


class EchelonAccumulator:
    """Incremental RREF: rows are fed in batches and only the basis is kept."""

    def __init__(self, cols: int, memory_cap: Optional[int] = None):
        self.cols = cols
        self.memory_cap = memory_cap
        self.basis = np.zeros((0, words_for(cols)), dtype=WORD_DTYPE)
        self.pivot_cols: List[int] = []
        self.rows_seen = 0

    @property
    def rank(self) -> int:
        return len(self.pivot_cols)

    def add_rows(self, rows: Union[BitMatrix, np.ndarray]) -> int:
        """Absorb a batch; returns how many new pivots it contributed."""
        batch = rows.data if isinstance(rows, BitMatrix) else rows
        batch = np.array(batch, dtype=WORD_DTYPE, copy=True)
        self.rows_seen += batch.shape[0]
        check_budget((self.basis.shape[0] + 2 * batch.shape[0]) * batch.shape[1] * 8, self.memory_cap,
                     what="streaming elimination")
        if self.pivot_cols:
            _reduce_against(batch, self.basis, self.pivot_cols)
        new_pivots = _eliminate(batch, self.cols)
        if not new_pivots:
            return 0
        fresh = batch[:len(new_pivots)]
        if self.pivot_cols:
            _reduce_against(self.basis, fresh, new_pivots)
        merged = np.vstack([self.basis, fresh])
        cols = np.array(self.pivot_cols + new_pivots)
        order = np.argsort(cols, kind="stable")
        self.basis = merged[order]
        self.pivot_cols = [int(c) for c in cols[order]]
        return len(new_pivots)

    def result(self) -> EchelonResult:
        reduced = BitMatrix(self.rank, self.cols, self.basis.copy())
        return EchelonResult(self.rank, tuple(self.pivot_cols), reduced)


# ==== SOLUTIONS ====

def solve_affine(m: Union[BitMatrix, EchelonResult], rhs_included: bool = True,
                 project: Optional[Sequence[int]] = None) -> AffineSolutionSet:
    """Solutions of m·(y, 1) = 0 (or m·y = 0 without a constant column).

    With `project`, the set is described only on those unknown coordinates;
    the basis then spans the projected kernel and is made independent.
    """
    ech = m if isinstance(m, EchelonResult) else rref(m)
    cols = ech.reduced.cols
    unknowns = cols - 1 if rhs_included else cols
    const_col = cols - 1 if rhs_included else None
    coords = tuple(range(unknowns)) if project is None else tuple(project)
    if any(not 0 <= c < unknowns for c in coords):
        raise UsageError("projection coordinates out of range")
    if const_col is not None and ech.pivot_cols and ech.pivot_cols[-1] == const_col:
        return AffineSolutionSet(0, (), False, len(coords), None if project is None else coords)

    row_of = ech.pivot_row_of()
    free = [c for c in range(unknowns) if c not in row_of]
    position = {c: k for k, c in enumerate(coords)}
    pivot_coords = [c for c in coords if c in row_of]
    sub = ech.reduced.data[[row_of[c] for c in pivot_coords]] if pivot_coords else None
    sub_bits = _unpack(sub, cols) if sub is not None else np.zeros((0, cols), dtype=bool)

    particular = 0
    if const_col is not None:
        for j, c in enumerate(pivot_coords):
            if sub_bits[j, const_col]:
                particular |= 1 << position[c]

    spanning = []
    pivot_positions = [position[c] for c in pivot_coords]
    for f in free:
        v = 1 << position[f] if f in position else 0
        for j in np.flatnonzero(sub_bits[:, f]):
            v |= 1 << pivot_positions[j]
        if v:
            spanning.append(v)
    if project is None:
        basis = tuple(spanning)
    else:
        basis = tuple(spanning[i] for i in max_independent_rows(spanning))
    return AffineSolutionSet(particular, basis, True, len(coords), None if project is None else coords)


def max_independent_rows(vectors: Union[BitMatrix, Sequence[int]]) -> List[int]:
    """Greedy maximal independent subset in input order; returns kept indices."""
    if isinstance(vectors, BitMatrix):
        vectors = vectors.to_int_rows()
    basis = {}
    kept = []
    for i, v in enumerate(vectors):
        while v:
            low = v & -v
            if low in basis:
                v ^= basis[low]
            else:
                basis[low] = v
                kept.append(i)
                break
    return kept


# ==== BINARY DUMP ====

def dump_matrix(m: BitMatrix, path: str):
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(struct.pack("<QQ", m.rows, m.cols))
        f.write(np.ascontiguousarray(m.data, dtype=WORD_DTYPE).tobytes())


def load_matrix(path: str) -> BitMatrix:
    with open(path, "rb") as f:
        magic = f.read(len(DUMP_MAGIC))
        if magic != DUMP_MAGIC:
            raise SpecParseError("not a filterxl matrix dump", source=path)
        rows, cols = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(), dtype=WORD_DTYPE)
    if data.size != rows * words_for(cols):
        raise SpecParseError(f"truncated matrix dump: expected {rows}x{cols}", source=path)
    return BitMatrix(rows, cols, data.reshape(rows, words_for(cols)).copy())
