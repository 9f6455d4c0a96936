from itertools import product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anf import (BoolPoly, Monomial, TruthTable, add, degrevlex_key, evaluate, format_poly, from_truth_table,
                 mobius, monomial_count, monomial_masks_up_to, monomials_up_to, mul_reduced, normal_form,
                 parse_poly, substitute, to_truth_table)
from ciphers import WGT13_ANF, WGT13_TERMS, wgt_anf
from errors import ResourceError, SpecParseError, UsageError


def x(i, n):
    return BoolPoly.var(i, n)


def same_ring_pairs(max_vars=10):
    @st.composite
    def build(draw):
        m = draw(st.integers(1, max_vars))
        monos = st.sets(st.integers(0, (1 << m) - 1), max_size=30)
        return BoolPoly(draw(monos), m), BoolPoly(draw(monos), m), BoolPoly(draw(monos), m)
    return build()


# ==== ARITHMETIC ====

def test_add_examples():
    n = 3
    p = x(1, n) + x(2, n)
    assert (p + p).is_zero
    assert p + (x(2, n) + x(3, n)) == x(1, n) + x(3, n)
    assert (wgt_anf() + parse_poly(WGT13_ANF, 7)).is_zero


def test_mismatched_rings_rejected():
    with pytest.raises(UsageError):
        add(x(1, 2), x(1, 3))
    with pytest.raises(UsageError):
        mul_reduced(x(1, 2), x(1, 3))


def test_mul_reduced_uses_field_equations():
    n = 2
    one = BoolPoly.one(n)
    assert x(1, n) * x(1, n) == x(1, n)
    assert ((x(1, n) + one) * x(1, n)).is_zero


def test_evaluate():
    p = x(1, 3) * x(2, 3) + x(3, 3)
    assert evaluate(p, (1, 1, 0)) == 1
    assert evaluate(BoolPoly.zero(3), (1, 0, 1)) == 0
    with pytest.raises(UsageError):
        evaluate(p, (1, 1))


def test_degree_of_zero_is_below_everything():
    z = BoolPoly.zero(4)
    assert z.degree < 0
    assert max(z.degree, BoolPoly.one(4).degree) == 0


def test_substitute():
    p = x(1, 3) * x(2, 3) + x(3, 3)
    assert substitute(p, 1, 1) == x(2, 3) + x(3, 3)
    assert substitute(p, 1, 0) == x(3, 3)


def test_normal_form_against_field_equations():
    n = 3
    g = x(1, n) * x(2, n) + x(3, n)
    assert normal_form(x(1, n) * x(2, n), [g]) == x(3, n)
    assert normal_form(g * x(3, n), [g]).is_zero


@given(same_ring_pairs())
def test_add_is_commutative_and_associative(triple):
    p, q, r = triple
    assert p + q == q + p
    assert (p + q) + r == p + (q + r)
    assert (p + p).is_zero


@settings(max_examples=60)
@given(same_ring_pairs())
def test_product_is_pointwise_and(triple):
    p, q, _ = triple
    tp, tq = to_truth_table(p), to_truth_table(q)
    assert np.array_equal(to_truth_table(p * q).values, tp.values & tq.values)


# ==== TRUTH TABLES ====

def test_truth_table_examples():
    assert from_truth_table(TruthTable(3, np.ones(8, dtype=np.uint8))) == BoolPoly.one(3)
    t = TruthTable.from_function(2, lambda p: (p & 1) ^ (p >> 1 & 1))
    assert from_truth_table(t) == x(1, 2) + x(2, 2)


def test_truth_table_length_checked():
    with pytest.raises(UsageError):
        TruthTable(3, np.zeros(7, dtype=np.uint8))


def test_truth_table_size_limit():
    with pytest.raises(ResourceError):
        to_truth_table(BoolPoly.zero(25))


@settings(max_examples=50)
@given(st.integers(0, 12), st.randoms(use_true_random=False))
def test_mobius_round_trip(m, rnd):
    values = np.array([rnd.getrandbits(1) for _ in range(1 << m)], dtype=np.uint8)
    t = TruthTable(m, values)
    assert to_truth_table(from_truth_table(t)) == t
    assert np.array_equal(mobius(mobius(values.copy())), values)


# ==== MONOMIAL ORDER ====

def _naive_less(a: int, b: int, n: int) -> bool:
    """x^a < x^b: lower degree, else the rightmost nonzero entry of a - b is positive."""
    da, db = a.bit_count(), b.bit_count()
    if da != db:
        return da < db
    for i in reversed(range(n)):
        diff = (a >> i & 1) - (b >> i & 1)
        if diff:
            return diff > 0
    return False


@pytest.mark.parametrize("n", range(1, 7))
def test_degrevlex_matches_naive_comparator(n):
    for a, b in product(range(1 << n), repeat=2):
        assert (degrevlex_key(a) < degrevlex_key(b)) == _naive_less(a, b, n)


def test_variable_order():
    x1, x2, x3 = (Monomial.from_vars([i]) for i in (1, 2, 3))
    assert x3 < x2 < x1
    assert x1 < Monomial.from_vars([2, 3])


def test_monomials_up_to_small():
    got = monomials_up_to(3, 1)
    assert len(got) == 4
    assert {str(m) for m in got} == {"1", "x1", "x2", "x3"}
    assert got[0] == Monomial(0)


@pytest.mark.parametrize("n", [0, 1, 5, 12, 30])
def test_monomials_up_to_counts_and_order(n):
    for D in range(0, min(n, 6) + 1):
        masks = monomial_masks_up_to(n, D)
        assert len(masks) == sum(comb(n, i) for i in range(D + 1)) == monomial_count(n, D)
        keys = [degrevlex_key(m) for m in masks]
        assert all(a < b for a, b in zip(keys, keys[1:]))


def test_monomial_counts_from_the_attack():
    assert len(monomials_up_to(21, 5)) == 27896
    assert monomial_count(259, 3) == 1 + 259 + comb(259, 2) + comb(259, 3)


def test_degree_bound_clamped():
    assert len(monomials_up_to(3, 9)) == 8
    with pytest.raises(UsageError):
        monomials_up_to(3, -1)


# ==== TEXT FORMAT ====

def test_format_poly():
    assert format_poly(BoolPoly.zero(3)) == "0"
    p = x(3, 3) + x(1, 3) * x(2, 3) + BoolPoly.one(3) + x(1, 3)
    assert format_poly(p) == "x1*x2+x1+x3+1"


def test_parse_poly_round_trip_and_cancellation():
    p = parse_poly("x1*x2 + x3 + 1", 3)
    assert parse_poly(format_poly(p), 3) == p
    assert parse_poly("x1+x1", 2).is_zero
    assert parse_poly("0").is_zero


def test_wgt_fixture_term_count():
    assert len(parse_poly(WGT13_ANF, 7)) == WGT13_TERMS == 56
    assert len(wgt_anf()) == 56


def test_parse_poly_errors_carry_position():
    with pytest.raises(SpecParseError) as e:
        parse_poly("x1+y2", 3, source="f.spec", line=4)
    assert e.value.line == 4 and e.value.col == 4
    with pytest.raises(SpecParseError):
        parse_poly("x1*x1", 2)
    with pytest.raises(SpecParseError):
        parse_poly("x1++x2", 2)
    with pytest.raises(SpecParseError):
        parse_poly("x5", 3)
