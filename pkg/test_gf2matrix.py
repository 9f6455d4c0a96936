import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import ResourceError, SpecParseError, UsageError
from gf2matrix import (BitMatrix, EchelonAccumulator, dump_matrix, load_matrix, max_independent_rows, rank,
                       rref, solve_affine)


def naive_rank(rows):
    basis = {}
    for v in rows:
        while v:
            top = v.bit_length() - 1
            if top in basis:
                v ^= basis[top]
            else:
                basis[top] = v
                break
    return len(basis)


def random_matrix(rng, rows, cols, density=0.5):
    return BitMatrix.from_bool(rng.random((rows, cols)) < density)


@st.composite
def matrices(draw, max_rows=64, max_cols=64):
    rows = draw(st.integers(0, max_rows))
    cols = draw(st.integers(1, max_cols))
    ints = draw(st.lists(st.integers(0, (1 << cols) - 1), min_size=rows, max_size=rows))
    return BitMatrix.from_int_rows(ints, cols)


# ==== BASICS ====

def test_identity_and_equal_rows():
    assert rank(BitMatrix.identity(3)) == 3
    assert rank(BitMatrix.from_int_rows([0b101, 0b101], 3)) == 1
    assert rank(BitMatrix.zeros(0, 5)) == 0


def test_from_bool_and_back():
    a = np.array([[1, 0, 1], [0, 1, 1]], dtype=bool)
    m = BitMatrix.from_bool(a)
    assert np.array_equal(m.to_bool(), a)
    assert m.get(0, 2) == 1 and m.get(1, 0) == 0
    assert m.to_int_rows() == [0b101, 0b110]


def test_data_is_read_only():
    m = BitMatrix.identity(4)
    with pytest.raises(ValueError):
        m.data[0, 0] = 0


def test_row_beyond_width_rejected():
    with pytest.raises(UsageError):
        BitMatrix.from_int_rows([0b1000], 3)


def test_matvec_vecmat_and_power():
    m = BitMatrix.from_int_rows([0b011, 0b110, 0b100], 3)
    assert m.matvec(0b001) == 0b001
    assert m.vecmat(0b011) == 0b101
    assert m.power(0) == BitMatrix.identity(3)
    assert m.power(3) == m.matmul(m).matmul(m)


def test_wide_rows_cross_word_boundaries():
    cols = 200
    rows = [(1 << 199) | 1, (1 << 64) | (1 << 63), (1 << 199) | (1 << 64) | (1 << 63) | 1]
    m = BitMatrix.from_int_rows(rows, cols)
    assert m.to_int_rows() == rows
    assert rank(m) == 2


# ==== ELIMINATION ====

@given(matrices())
def test_rank_matches_transpose_and_naive(m):
    r = rank(m)
    assert r == rank(m.transpose()) == naive_rank(m.to_int_rows())
    assert r <= min(m.rows, m.cols)


@given(matrices())
def test_rref_is_idempotent(m):
    once = rref(m)
    twice = rref(once.reduced)
    assert twice.reduced == once.reduced
    assert twice.pivot_cols == once.pivot_cols


@given(matrices())
def test_rref_shape(m):
    ech = rref(m)
    assert list(ech.pivot_cols) == sorted(ech.pivot_cols)
    bits = ech.reduced.to_bool()
    for i, c in enumerate(ech.pivot_cols):
        assert bits[:, c].sum() == 1 and bits[i, c]
        assert not bits[i, :c].any()


@pytest.mark.parametrize("rows,cols,seed", [(150, 200, 1), (300, 130, 2), (97, 97, 3), (40, 700, 4)])
def test_multiword_rank_matches_naive(rows, cols, seed):
    m = random_matrix(np.random.default_rng(seed), rows, cols, density=0.3)
    assert rank(m) == naive_rank(m.to_int_rows())


def test_low_rank_product():
    rng = np.random.default_rng(7)
    a = random_matrix(rng, 180, 20)
    b = random_matrix(rng, 20, 150)
    assert rank(a.matmul(b)) <= 20


def test_memory_cap_enforced():
    m = BitMatrix.identity(128)
    with pytest.raises(ResourceError) as e:
        rref(m, memory_cap=64)
    assert e.value.cap_bytes == 64


@pytest.mark.parametrize("batch", [1, 7, 20, 64])
def test_accumulator_equals_batch_rref(batch):
    m = random_matrix(np.random.default_rng(batch), 150, 200, density=0.2)
    acc = EchelonAccumulator(m.cols)
    for lo in range(0, m.rows, batch):
        acc.add_rows(m.data[lo:lo + batch])
    got, want = acc.result(), rref(m)
    assert got.rank == want.rank
    assert got.pivot_cols == want.pivot_cols
    assert got.reduced == want.reduced
    assert acc.rows_seen == 150


# ==== SOLUTIONS ====

def test_single_equation_forces_value():
    # x1 + 1 = 0
    sol = solve_affine(BitMatrix.from_int_rows([0b11], 2))
    assert sol.consistent
    assert sol.particular == 1 and sol.dimension == 0


def test_empty_system_is_everything():
    sol = solve_affine(BitMatrix.zeros(0, 2), rhs_included=False)
    assert sol.consistent and sol.dimension == 2
    assert sorted(sol.members()) == [0, 1, 2, 3]


def test_inconsistent_system():
    assert not solve_affine(BitMatrix.from_int_rows([0b100], 3)).consistent
    assert list(solve_affine(BitMatrix.from_int_rows([0b100], 3)).members()) == []


def test_projection_keeps_independent_basis():
    # x1 + x2 = 0 over (x1, x2, x3); projected onto x1 alone
    m = BitMatrix.from_int_rows([0b0011], 4)
    sol = solve_affine(m, project=[0])
    assert sol.nvars == 1 and sol.dimension == 1
    full = solve_affine(m)
    assert full.dimension == 2


@settings(max_examples=80)
@given(matrices(max_rows=24, max_cols=12))
def test_every_member_solves_the_system(m):
    sol = solve_affine(m)
    ech = rref(m)
    unknowns = m.cols - 1
    members = set(sol.members())
    for y in range(1 << unknowns):
        v = y | (1 << unknowns)
        ok = all((row & v).bit_count() % 2 == 0 for row in m.to_int_rows())
        assert (y in members) == ok
    if sol.consistent:
        assert sol.dimension == unknowns - ech.rank


@given(st.lists(st.integers(0, (1 << 40) - 1), max_size=50))
def test_max_independent_rows(vectors):
    kept = max_independent_rows(vectors)
    assert kept == sorted(kept)
    assert len(kept) == naive_rank(vectors) == naive_rank([vectors[i] for i in kept])


def test_max_independent_rows_examples():
    assert max_independent_rows([5, 5]) == [0]
    assert max_independent_rows([0]) == []
    assert max_independent_rows([1, 2, 3, 4]) == [0, 1, 3]


# ==== BINARY DUMP ====

def test_dump_and_load(tmp_path):
    m = random_matrix(np.random.default_rng(11), 33, 130)
    path = tmp_path / "m.bin"
    dump_matrix(m, str(path))
    assert load_matrix(str(path)) == m


def test_load_rejects_foreign_and_truncated_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a matrix")
    with pytest.raises(SpecParseError):
        load_matrix(str(bad))
    good = tmp_path / "good.bin"
    dump_matrix(BitMatrix.identity(100), str(good))
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(SpecParseError):
        load_matrix(str(good))
