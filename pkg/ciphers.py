"""Word-oriented filter generators over GF(2^7): WG-PRNG and the toy family.

A state is a tuple of 7-bit words, index 0 the oldest. Word k, coefficient
of omega^j sits at flat bit 7k + j, which is variable x_{7k+j+1} of the
attack; inside a word, x_{j+1} of the filter is the coefficient of omega^j.
"""
import functools
import logging
import math
import os
from dataclasses import dataclass
from io import StringIO
from typing import FrozenSet, List, Optional, Sequence, Tuple

import galois
import numpy as np
from dotenv.parser import parse_stream

from anf import BoolPoly, TruthTable, from_truth_table, parse_poly, to_truth_table
from errors import PolicyError, SpecParseError, UsageError
from gf2matrix import BitMatrix, rank

log = logging.getLogger("CIPHER")

WORD_BITS = 7
FIELD_MODULUS = "x^7 + x^3 + x^2 + x + 1"
GF128 = galois.GF(2**WORD_BITS, irreducible_poly=FIELD_MODULUS)
OMEGA = 0b10
WG_DECIMATION = 13
WG_INIT_ROUNDS = 74
WG_MAX_KEYSTREAM = 1 << 18
# factoring 2^n - 1 beyond this is not attempted
MAX_PERIOD_CHECK_BITS = 64

# Published ANF of Tr(WGP(x^13)), x_{j+1} = coefficient of omega^j
WGT13_TERMS = 56
WGT13_ANF = (
    "x2*x3*x4*x5*x6*x7+x1*x2*x3*x4*x6+x1*x2*x3*x5*x6+x1*x2*x4*x5*x6"
    "+x2*x3*x4*x5*x6+x1*x2*x3*x5*x7+x1*x3*x4*x5*x7+x2*x3*x4*x5*x7"
    "+x1*x2*x3*x6*x7+x1*x3*x4*x6*x7+x2*x3*x4*x6*x7+x1*x4*x5*x6*x7"
    "+x2*x4*x5*x6*x7+x1*x2*x3*x5+x1*x2*x3*x6+x2*x3*x4*x6+x1*x2*x5*x6"
    "+x2*x4*x5*x6+x3*x4*x5*x6+x2*x3*x4*x7+x1*x2*x5*x7+x2*x3*x5*x7"
    "+x1*x4*x5*x7+x2*x4*x5*x7+x2*x3*x6*x7+x1*x4*x6*x7+x2*x5*x6*x7"
    "+x3*x5*x6*x7+x4*x5*x6*x7+x1*x2*x3+x1*x2*x5+x1*x3*x5+x2*x3*x5"
    "+x1*x2*x6+x1*x4*x6+x2*x4*x6+x3*x4*x6+x4*x5*x6+x1*x2*x7"
    "+x1*x4*x7+x3*x4*x7+x4*x5*x7+x1*x6*x7+x3*x6*x7+x5*x6*x7+x3*x4"
    "+x4*x5+x1*x6+x4*x6+x2*x7+x4*x7+x5*x7+x1+x4+x6+x7"
)


# ==== GF(2^7) ====

def gf_add(x: int, y: int) -> int:
    return (x ^ y) & 0x7F


def gf_mul(x: int, y: int) -> int:
    return int(GF128(x) * GF128(y))


def gf_pow(x: int, e: int) -> int:
    return int(GF128(x) ** e)


def gf_inv(x: int) -> int:
    if x == 0:
        raise UsageError("0 has no inverse in GF(2^7)")
    return int(GF128(x) ** -1)


def trace(x: int) -> int:
    """Tr(x) = x_0 + x_5 in the polynomial basis."""
    return (x ^ (x >> 5)) & 1


def _wgp_array(values, d: int) -> np.ndarray:
    u = GF128(values) ** d + GF128(1)
    out = u + u**33 + u**39 + u**41 + u**104 + GF128(1)
    return np.asarray(out, dtype=np.int64)


def wgp(x: int, d: int = WG_DECIMATION) -> int:
    """Decimated WG permutation WGP(x^d)."""
    if math.gcd(d, 127) != 1:
        raise UsageError(f"decimation {d} is not coprime to 127")
    return int(_wgp_array([x], d)[0])


def wgt(x: int, d: int = WG_DECIMATION) -> int:
    return trace(wgp(x, d))


ELEMENTS = np.arange(128)
MUL_OMEGA = np.asarray(GF128(ELEMENTS) * GF128(OMEGA), dtype=np.int64)
WGP13_TABLE = _wgp_array(ELEMENTS, WG_DECIMATION)
WGT13_TABLE = ((WGP13_TABLE ^ (WGP13_TABLE >> 5)) & 1).astype(np.uint8)


@functools.lru_cache(maxsize=None)
def wgt_anf() -> BoolPoly:
    """ANF of the decimated WG transformation, computed from its truth table."""
    return from_truth_table(TruthTable(WORD_BITS, WGT13_TABLE.copy()))


# ==== STATE & SPEC ====

@dataclass(frozen=True)
class WordState:
    words: Tuple[int, ...]

    def __post_init__(self):
        if any(not 0 <= w < 128 for w in self.words):
            raise UsageError("state words must be 7-bit values")

    @property
    def a(self) -> int:
        return len(self.words)

    @property
    def nbits(self) -> int:
        return WORD_BITS * len(self.words)

    @classmethod
    def from_bits(cls, bits: int, a: int) -> "WordState":
        return cls(tuple((bits >> (WORD_BITS * k)) & 0x7F for k in range(a)))

    def to_bits(self) -> int:
        v = 0
        for k, w in enumerate(self.words):
            v |= w << (WORD_BITS * k)
        return v

    def to_hex(self) -> List[str]:
        return [f"{w:02x}" for w in self.words]

    @classmethod
    def from_hex(cls, words: Sequence[str]) -> "WordState":
        return cls(tuple(int(w, 16) for w in words))


@dataclass(frozen=True)
class CipherSpec:
    """Filter generator: S_{t+a} = sum(S_{t+k}, k in taps) + omega*S_{t+omega_tap}."""

    name: str
    a: int
    feedback_taps: FrozenSet[int]
    omega_tap: int
    filter_word: int
    filter: BoolPoly
    filter_name: str = ""
    max_keystream: Optional[int] = None
    init_rounds: int = 0

    def __post_init__(self):
        if self.a < 1:
            raise UsageError("a cipher needs at least one word")
        bad = [k for k in self.feedback_taps | {self.omega_tap, self.filter_word} if not 0 <= k < self.a]
        if bad:
            raise UsageError(f"word indices {sorted(bad)} outside 0..{self.a - 1}")
        if self.filter.nvars != WORD_BITS:
            raise UsageError(f"filter must be a polynomial in {WORD_BITS} variables")

    @property
    def n(self) -> int:
        return WORD_BITS * self.a

    @property
    def m(self) -> int:
        return WORD_BITS

    @property
    def has_init(self) -> bool:
        return self.init_rounds > 0

    def filter_table(self) -> np.ndarray:
        return _filter_table(self.filter)

    def feedback_poly(self) -> galois.Poly:
        coeffs = [0] * (self.a + 1)
        coeffs[self.a] = 1
        for k in self.feedback_taps:
            coeffs[k] ^= 1
        coeffs[self.omega_tap] ^= OMEGA
        # galois wants descending degree
        return galois.Poly(GF128(list(reversed(coeffs))), field=GF128)

    def describe(self) -> dict:
        return {
            'name': self.name,
            'a': self.a,
            'n': self.n,
            'feedback_taps': sorted(self.feedback_taps),
            'omega_tap': self.omega_tap,
            'filter_word': self.filter_word,
            'filter': self.filter_name or str(self.filter),
            'max_keystream': self.max_keystream,
            'init_rounds': self.init_rounds,
            'feedback_poly': str(self.feedback_poly())
        }


@functools.lru_cache(maxsize=64)
def _filter_table(f: BoolPoly) -> np.ndarray:
    table = to_truth_table(f).values.copy()
    table.flags.writeable = False
    return table


def check_feedback(spec: CipherSpec, full: Optional[bool] = None) -> bool:
    """Primitivity of the feedback polynomial over GF(2^7).

    Full primitivity needs the factorization of 2^n - 1; above
    MAX_PERIOD_CHECK_BITS only irreducibility is checked.
    """
    poly = spec.feedback_poly()
    if full is None:
        full = spec.n <= MAX_PERIOD_CHECK_BITS
    ok = poly.is_primitive() if full else poly.is_irreducible()
    log.debug("%s feedback %s: %s %s", spec.name, poly, "primitive" if full else "irreducible", ok)
    return bool(ok)


# ==== BUILT-INS ====

def _wg_prng() -> CipherSpec:
    return CipherSpec("wg-prng", 37, frozenset({31, 30, 26, 24, 19, 13, 12, 8, 6}), 0, 36, wgt_anf(),
                      filter_name="WGT13", max_keystream=WG_MAX_KEYSTREAM, init_rounds=WG_INIT_ROUNDS)


def _toy3() -> CipherSpec:
    return CipherSpec("toy3", 3, frozenset({1}), 0, 2, wgt_anf(), filter_name="WGT13")


def _toy5() -> CipherSpec:
    return CipherSpec("toy5", 5, frozenset({2}), 0, 4, wgt_anf(), filter_name="WGT13")


BUILTINS = {'wg-prng': _wg_prng, 'toy3': _toy3, 'toy5': _toy5}


@functools.lru_cache(maxsize=None)
def builtin(name: str) -> CipherSpec:
    if name not in BUILTINS:
        raise UsageError(f"unknown built-in cipher {name!r} (choose from {', '.join(BUILTINS)})")
    spec = BUILTINS[name]()
    if not check_feedback(spec):
        raise UsageError(f"feedback polynomial of {name} failed its primitivity check")
    return spec


# ==== SPEC FILES ====

SPEC_KEYS = ("name", "a", "feedback_taps", "omega_tap", "filter_word", "filter", "max_keystream", "init_rounds")


def _int_field(key: str, value: str, line: int, col: int, source: Optional[str]) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise SpecParseError(f"{key} must be an integer, got {value!r}", line, col, source)


def parse_cipher_spec(text: str, source: Optional[str] = None) -> CipherSpec:
    """Parse the key=value cipher description; failures carry line and column."""
    values = {}
    where = {}
    for binding in parse_stream(StringIO(text)):
        start = binding.original.line
        if binding.error:
            raise SpecParseError("cannot parse line", start, 1, source)
        if binding.key is None:
            continue
        if binding.key not in SPEC_KEYS:
            raise SpecParseError(f"unknown key {binding.key!r}", start, 1, source)
        value = (binding.value or "").strip()
        values[binding.key] = value
        col = binding.original.string.find(value) + 1 if value else 1
        where[binding.key] = (start, max(col, 1))

    for key in ("a", "feedback_taps", "omega_tap", "filter"):
        if key not in values:
            raise SpecParseError(f"missing required key {key!r}", None, None, source)

    a = _int_field("a", values["a"], *where["a"], source)
    taps = set()
    tline, tcol = where["feedback_taps"]
    for part in values["feedback_taps"].split(","):
        if part.strip():
            taps.add(_int_field("feedback_taps", part.strip(), tline, tcol, source))
    omega_tap = _int_field("omega_tap", values["omega_tap"], *where["omega_tap"], source)
    filter_word = a - 1
    if values.get("filter_word"):
        filter_word = _int_field("filter_word", values["filter_word"], *where["filter_word"], source)
    max_keystream = None
    if values.get("max_keystream"):
        max_keystream = _int_field("max_keystream", values["max_keystream"], *where["max_keystream"], source)
    init_rounds = 0
    if values.get("init_rounds"):
        init_rounds = _int_field("init_rounds", values["init_rounds"], *where["init_rounds"], source)

    fline, fcol = where["filter"]
    if values["filter"] == "WGT13":
        filt, filter_name = wgt_anf(), "WGT13"
    else:
        filt = parse_poly(values["filter"], WORD_BITS, source=source, line=fline, col_offset=fcol - 1)
        filter_name = ""
    name = values.get("name") or (os.path.splitext(os.path.basename(source))[0] if source else "custom")
    try:
        return CipherSpec(name, a, frozenset(taps), omega_tap, filter_word, filt, filter_name,
                          max_keystream, init_rounds)
    except UsageError as e:
        raise SpecParseError(str(e), None, None, source)


def load_cipher(name_or_path: str) -> CipherSpec:
    """Built-in name or path to a cipher-spec file."""
    if name_or_path in BUILTINS:
        return builtin(name_or_path)
    if not os.path.exists(name_or_path):
        raise UsageError(f"{name_or_path!r} is neither a built-in cipher nor a spec file")
    with open(name_or_path, encoding="utf-8") as f:
        spec = parse_cipher_spec(f.read(), source=name_or_path)
    if spec.n <= MAX_PERIOD_CHECK_BITS and not check_feedback(spec):
        log.warning("feedback polynomial of %s is not primitive", spec.name)
    log.info("loaded cipher %s (a=%d, n=%d)", spec.name, spec.a, spec.n)
    return spec


# ==== CLOCKING ====

def _linear_feedback(spec: CipherSpec, words: Tuple[int, ...]) -> int:
    new = int(MUL_OMEGA[words[spec.omega_tap]])
    for k in spec.feedback_taps:
        new ^= words[k]
    return new


def _check_state(spec: CipherSpec, state: WordState):
    if state.a != spec.a:
        raise UsageError(f"{spec.name} has {spec.a} words, state has {state.a}")


def step(spec: CipherSpec, state: WordState) -> WordState:
    """One running-phase clock."""
    _check_state(spec, state)
    return WordState(state.words[1:] + (_linear_feedback(spec, state.words),))


def init_round(spec: CipherSpec, state: WordState) -> WordState:
    new = _linear_feedback(spec, state.words) ^ int(WGP13_TABLE[state.words[-1]])
    return WordState(state.words[1:] + (new,))


def init_round_inverse(spec: CipherSpec, state: WordState) -> WordState:
    """Undo one initialization round."""
    _check_state(spec, state)
    cur = state.words
    # cur[k - 1] is the pre-round word k
    rhs = cur[-1] ^ int(WGP13_TABLE[cur[-2]])
    coeff = 0
    for k in spec.feedback_taps:
        if k:
            rhs ^= cur[k - 1]
        else:
            coeff ^= 1
    if spec.omega_tap:
        rhs ^= int(MUL_OMEGA[cur[spec.omega_tap - 1]])
    else:
        coeff ^= OMEGA
    if coeff == 0:
        raise UsageError(f"{spec.name}: oldest word does not enter the feedback, round is not invertible")
    oldest = gf_mul(gf_inv(coeff), rhs)
    return WordState((oldest,) + cur[:-1])


def init_phase(spec: CipherSpec, state: WordState) -> WordState:
    """Run the nonlinear initialization rounds (WG-PRNG only)."""
    if not spec.has_init:
        raise UsageError(f"{spec.name} has no initialization phase")
    _check_state(spec, state)
    for _ in range(spec.init_rounds):
        state = init_round(spec, state)
    return state


def keystream(spec: CipherSpec, state: WordState, t: int, enforce_limit: bool = False) -> np.ndarray:
    """z_i = filter(filter word of the i-th state), i = 0..t-1."""
    _check_state(spec, state)
    if t < 0:
        raise UsageError("keystream length must be non-negative")
    if enforce_limit and spec.max_keystream is not None and t > spec.max_keystream:
        raise PolicyError(f"{spec.name} is limited to {spec.max_keystream} consecutive keystream bits "
                          f"(2^{math.log2(spec.max_keystream):g}); {t} requested")
    table = spec.filter_table()
    out = np.zeros(t, dtype=np.uint8)
    for i in range(t):
        out[i] = table[state.words[spec.filter_word]]
        state = step(spec, state)
    return out


def random_state(spec: CipherSpec, rng: np.random.Generator) -> WordState:
    """Uniform nonzero state."""
    while True:
        words = tuple(int(w) for w in rng.integers(0, 128, size=spec.a))
        if any(words):
            return WordState(words)


# ==== LINEAR UPDATE MATRIX ====

@dataclass(frozen=True)
class LinearUpdateMatrix:
    """M with M * bits(state) = bits(step(state)); row r is new bit r."""

    spec_name: str
    matrix: BitMatrix
    row_ints: Tuple[int, ...]

    @property
    def n(self) -> int:
        return self.matrix.rows

    def apply(self, bits: int) -> int:
        return self.matrix.matvec(bits)

    def row_times(self, v: int) -> int:
        """v^T * M for a row vector v over the n state bits."""
        out = 0
        k = 0
        while v:
            if v & 1:
                out ^= self.row_ints[k]
            v >>= 1
            k += 1
        return out

    def is_invertible(self) -> bool:
        return rank(self.matrix) == self.n


def _omega_block() -> List[int]:
    """Row j: which input coefficients feed coefficient j of omega*w."""
    rows = [0] * WORD_BITS
    for i in range(WORD_BITS):
        image = int(MUL_OMEGA[1 << i])
        for j in range(WORD_BITS):
            if image >> j & 1:
                rows[j] |= 1 << i
    return rows


@functools.lru_cache(maxsize=16)
def update_matrix(spec: CipherSpec) -> LinearUpdateMatrix:
    rows = []
    for k in range(spec.a - 1):
        for j in range(WORD_BITS):
            rows.append(1 << (WORD_BITS * (k + 1) + j))
    block = _omega_block()
    for j in range(WORD_BITS):
        r = block[j] << (WORD_BITS * spec.omega_tap)
        for k in spec.feedback_taps:
            r ^= 1 << (WORD_BITS * k + j)
        rows.append(r)
    return LinearUpdateMatrix(spec.name, BitMatrix.from_int_rows(rows, spec.n), tuple(rows))


def state_period_ok(spec: CipherSpec) -> bool:
    """M^(2^n-1) = I and M^((2^n-1)/p) != I for every prime p | 2^n-1."""
    if spec.n > MAX_PERIOD_CHECK_BITS:
        raise UsageError(f"period check needs the factorization of 2^{spec.n}-1; limited to n <= "
                         f"{MAX_PERIOD_CHECK_BITS}")
    M = update_matrix(spec).matrix
    order = (1 << spec.n) - 1
    identity = BitMatrix.identity(spec.n)
    if M.power(order) != identity:
        return False
    primes, _ = galois.factors(order)
    return all(M.power(order // p) != identity for p in primes)
