import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st

from anf import BoolPoly, TruthTable, evaluate_mask, from_truth_table, normal_form
from annihilators import (AnnihilatorBasis, ExpandedSet, algebraic_immunity, analyze_filter, annihilator_space,
                          expand_to_degree, independent_subset, reduced_gb_of_annihilator_ideal, variety)
from ciphers import wgt_anf
from errors import UsageError
from gf2matrix import max_independent_rows

WGT_SHAPE = {3: 1, 4: 30}
S_PRIME_SHAPE = {3: 1, 4: 34, 5: 21, 6: 7, 7: 1}


@pytest.fixture(scope="module")
def wgt():
    return wgt_anf()


@pytest.fixture(scope="module")
def wgt_bases(wgt):
    return {side: reduced_gb_of_annihilator_ideal(wgt, side) for side in (0, 1)}


@pytest.fixture(scope="module")
def wgt_analysis(wgt):
    return analyze_filter(wgt)


def as_vector(p: BoolPoly) -> int:
    v = 0
    for mk in p.support:
        v |= 1 << mk
    return v


def span_rank(polys) -> int:
    return len(max_independent_rows([as_vector(p) for p in polys]))


@st.composite
def filters(draw, max_vars=5):
    m = draw(st.integers(1, max_vars))
    bits = draw(st.lists(st.integers(0, 1), min_size=1 << m, max_size=1 << m))
    return from_truth_table(TruthTable(m, np.array(bits, dtype=np.uint8)))


# ==== GROEBNER BASES ====

def test_single_variable():
    F = BoolPoly.var(1, 1)
    basis = reduced_gb_of_annihilator_ideal(F, 1)
    assert basis.gb_prime == (BoolPoly([1, 0], 1),)
    assert not basis.unit


@pytest.mark.parametrize("side", [0, 1])
def test_wgt_basis_shape(wgt_bases, side):
    basis = wgt_bases[side]
    assert len(basis.gb_prime) == 31
    assert basis.degree_histogram() == WGT_SHAPE
    assert basis.generates
    assert basis.max_degree == 4


def test_annihilation(wgt, wgt_bases):
    one = BoolPoly.one(7)
    for g in wgt_bases[1].gb_prime:
        assert (g * wgt).is_zero
    for g in wgt_bases[0].gb_prime:
        assert (g * (wgt + one)).is_zero


@pytest.mark.parametrize("side", [0, 1])
def test_members_vanish_on_the_variety(wgt, wgt_bases, side):
    points = variety(wgt, side)
    for g in wgt_bases[side].gb:
        assert all(evaluate_mask(g, int(p)) == 0 for p in points)


def test_filter_reduces_to_zero_on_its_own_side(wgt, wgt_bases):
    assert normal_form(wgt, wgt_bases[0].gb).is_zero
    assert normal_form(wgt + BoolPoly.one(7), wgt_bases[1].gb).is_zero


@pytest.mark.parametrize("side", [0, 1])
def test_basis_is_reduced(wgt_bases, side):
    gb = wgt_bases[side].gb
    for g in gb:
        lm = g.leading_mask
        for h in gb:
            if h is g:
                continue
            assert not any(lm & t == lm for t in h.support)


def test_constant_filter_gives_unit_ideal():
    basis = reduced_gb_of_annihilator_ideal(BoolPoly.one(3), 0)
    assert basis.unit
    assert basis.gb_prime == (BoolPoly.one(3),)
    full = reduced_gb_of_annihilator_ideal(BoolPoly.one(3), 1)
    assert not full.unit and full.gb_prime == ()


def test_bad_side_rejected(wgt):
    with pytest.raises(UsageError):
        reduced_gb_of_annihilator_ideal(wgt, 2)


# ==== ALGEBRAIC IMMUNITY ====

def test_algebraic_immunity_examples(wgt):
    assert algebraic_immunity(BoolPoly.var(1, 3) + BoolPoly.var(2, 3)) == 1
    assert algebraic_immunity(wgt) == 3
    assert algebraic_immunity(wgt + BoolPoly.one(7)) == 3
    assert algebraic_immunity(BoolPoly.one(4)) == 0
    assert algebraic_immunity(BoolPoly.zero(4)) == 0


@settings(max_examples=40)
@given(st.permutations([0] * 16 + [1] * 16))
def test_balanced_five_variable_bound(bits):
    F = from_truth_table(TruthTable(5, np.array(bits, dtype=np.uint8)))
    assert 1 <= algebraic_immunity(F) <= 3


# ==== EXPANSION ====

def test_expansion_example():
    g = BoolPoly([1, 0], 2)
    basis = AnnihilatorBasis(1, 2, (g,), (g,), 1)
    expanded = expand_to_degree(basis, 2)
    assert set(expanded.polys) == {g, BoolPoly([3, 2], 2)}
    assert all(p.degree <= 2 for p in expanded.polys)


def test_wgt_expansion_to_four(wgt_bases):
    basis = wgt_bases[0]
    expanded = expand_to_degree(basis, 4)
    got = set(expanded.polys)
    f0 = next(g for g in basis.gb_prime if g.degree == 3)
    for i in range(1, 8):
        p = f0 * BoolPoly.var(i, 7)
        if not p.is_zero:
            assert p in got
    assert set(basis.gb_prime) <= got
    assert len(got) == len(expanded.polys)
    assert all(p.degree <= 4 for p in got)


def test_independent_subset_of_one():
    p = BoolPoly([3, 1], 3)
    s = ExpandedSet(0, 3, 3, (p,), ((0, 0),))
    assert independent_subset(s).polys == (p,)


@pytest.mark.parametrize("side", [0, 1])
def test_s_prime_shape(wgt_analysis, side):
    _, independent = wgt_analysis[side]
    assert len(independent) == 64
    assert independent.degree_histogram == S_PRIME_SHAPE
    assert 2 not in independent.degree_histogram
    assert span_rank(independent.polys) == 64


@pytest.mark.parametrize("side", [0, 1])
def test_truncation_matches_direct_run(wgt_analysis, wgt_bases, side):
    _, independent = wgt_analysis[side]
    direct = independent_subset(expand_to_degree(wgt_bases[side], 4))
    assert independent.truncated(4).degree_histogram == {3: 1, 4: 34}
    assert direct.degree_histogram == {3: 1, 4: 34}


@settings(max_examples=60, suppress_health_check=[HealthCheck.filter_too_much])
@given(filters(), st.sampled_from([0, 1]))
def test_expansion_spans_all_annihilators(F, side):
    basis = reduced_gb_of_annihilator_ideal(F, side)
    assume(basis.generates)
    for d in range(F.nvars + 1):
        generated = expand_to_degree(basis, d).polys
        oracle = annihilator_space(F, side, d)
        r = span_rank(generated)
        assert r == span_rank(oracle) == span_rank(list(generated) + list(oracle))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_disjoint_multipliers_keep_independence(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 6))
    n = int(rng.integers(m + 1, 13))
    candidates = [BoolPoly((int(v) for v in np.flatnonzero(rng.random(1 << m) < 0.4)), n)
                  for _ in range(int(rng.integers(1, 6)))]
    fs = [candidates[i] for i in max_independent_rows([as_vector(p) for p in candidates])]
    assume(fs)
    products = []
    for f in fs:
        k = int(rng.integers(1, 6))
        picks = rng.choice(1 << (n - m), size=min(k, 1 << (n - m)), replace=False)
        for pick in picks:
            mono = BoolPoly([int(pick) << m], n)
            products.append(f * mono)
    assert span_rank(products) == len(products)
