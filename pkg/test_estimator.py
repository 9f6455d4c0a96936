import math
from math import comb

import pytest
from hypothesis import given, strategies as st

from annihilators import analyze_filter
from ciphers import WG_MAX_KEYSTREAM, wgt_anf
from errors import AnalysisError, UsageError
from estimator import (OMEGA_CW, OMEGA_STRASSEN, TABLE_COLUMNS, baseline_cm_keystream, complexity_log2, estimate,
                       estimate_table, k_prime, render_csv, render_pretty, required_keystream, xl_size_estimates)

WG_TABLE = {
    # D: (log2 t, log2 complexity)
    4: (19.31, 77.06),
    5: (17.84, 92.98),
    6: (16.72, 108.15),
    7: (15.80, 122.68),
}
K_PRIME_WG = {4: 287, 5: 40502, 6: 3756585, 7: 258089371}


@pytest.fixture(scope="module")
def degrees():
    sides = analyze_filter(wgt_anf())
    return {side: [int(p.degree) for p in ind.polys] for side, (_, ind) in sides.items()}


@pytest.fixture(scope="module")
def wg_table(degrees):
    return estimate_table("wg-prng", 259, 7, degrees[0], degrees[1], 4, sorted(WG_TABLE),
                          max_keystream=WG_MAX_KEYSTREAM, omega=OMEGA_STRASSEN, security_level=128)


# ==== CLOSED FORMS ====

def test_k_prime_for_wg(degrees):
    for D, want in K_PRIME_WG.items():
        assert k_prime(degrees[0], 259, 7, D) == want
        assert k_prime(degrees[1], 259, 7, D) == want


def test_k_prime_for_toys(degrees):
    assert k_prime(degrees[0], 21, 7, 5) == 637
    assert k_prime(degrees[0], 35, 7, 5) == 1414


def test_k_prime_skips_high_degrees():
    assert k_prime([3, 9], 20, 7, 4) == 1 + 13
    assert k_prime([], 20, 7, 4) == 0
    with pytest.raises(UsageError):
        k_prime([3], 5, 7, 4)


def test_required_keystream():
    assert required_keystream(637, 637, 21, 5) == 44
    assert required_keystream(1414, 1414, 35, 5) == 272
    assert math.log2(required_keystream(40502, 40502, 259, 5)) == pytest.approx(17.84, abs=0.01)
    with pytest.raises(AnalysisError):
        required_keystream(0, 5, 21, 5)


def test_toy_products():
    assert 44 * 637 == 28028
    assert 272 * 1414 == 384608


def test_xl_sizes():
    N, T = xl_size_estimates(44, 21, 4, 5)
    assert T == 27896
    assert N == 44 * 22
    with pytest.raises(UsageError):
        xl_size_estimates(1, 21, 4, 3)


def test_complexity():
    top = comb(259, 4)
    assert complexity_log2(top, OMEGA_STRASSEN) == pytest.approx(77.06, abs=0.02)
    assert complexity_log2(top, OMEGA_CW) < complexity_log2(top, OMEGA_STRASSEN)
    with pytest.raises(UsageError):
        complexity_log2(0)


def test_estimate_cost_counts_top_degree_monomials(degrees):
    r = estimate("wg-prng", 259, 7, 7, degrees[0], degrees[1], 4, omega=OMEGA_STRASSEN)
    assert r.complexity_log2 == pytest.approx(OMEGA_STRASSEN * math.log2(comb(259, 7)))
    assert r.complexity_log2 == pytest.approx(122.68, abs=0.02)
    # the full monomial count stays in T and drives t
    assert r.T == sum(comb(259, i) for i in range(8))
    assert complexity_log2(r.T, OMEGA_STRASSEN) > r.complexity_log2 + 0.05


def test_k_prime_accepts_independent_sets():
    sides = analyze_filter(wgt_anf())
    for _, ind in sides.values():
        degs = [int(p.degree) for p in ind.polys]
        for D in (4, 5):
            assert k_prime(ind, 259, 7, D) == k_prime(degs, 259, 7, D) == K_PRIME_WG[D]
    assert k_prime(sides[0][1], 21, 7, 5) == 637


def test_estimate_takes_independent_sets(degrees):
    sides = analyze_filter(wgt_anf())
    by_set = estimate("wg-prng", 259, 7, 5, sides[0][1], sides[1][1], 4)
    by_degrees = estimate("wg-prng", 259, 7, 5, degrees[0], degrees[1], 4)
    assert by_set.to_dict() == by_degrees.to_dict()


def test_baseline():
    b = baseline_cm_keystream(259, 3)
    assert b == 2862209
    assert math.log2(b) == pytest.approx(21.45, abs=0.01)
    with pytest.raises(UsageError):
        baseline_cm_keystream(3, 4)


@given(st.lists(st.integers(1, 7), min_size=1, max_size=64), st.integers(7, 300), st.integers(1, 8))
def test_k_prime_is_monotone(degs, n, D):
    k = k_prime(degs, n, 7, D)
    assert k_prime(degs, n, 7, D + 1) >= k
    assert k_prime(degs, n + 1, 7, D) >= k
    assert k_prime(degs + [1], n, 7, D) >= k


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(1, 60), st.integers(0, 5))
def test_required_keystream_covers_the_monomials(k0, k1, n, D):
    D = min(D, n)
    t = required_keystream(k0, k1, n, D)
    T = sum(comb(n, i) for i in range(D + 1))
    assert t * min(k0, k1) >= T
    assert (t - 1) * min(k0, k1) < T


# ==== WG-PRNG TABLE ====

def test_wg_table_exponents(wg_table):
    for r in wg_table:
        want_t, want_c = WG_TABLE[r.D]
        assert r.t_log2 == pytest.approx(want_t, abs=0.02)
        assert r.complexity_log2 == pytest.approx(want_c, abs=0.02)
        assert r.k0 == r.k1 == K_PRIME_WG[r.D]


def test_wg_table_verdicts(wg_table):
    verdicts = {r.D: r for r in wg_table}
    assert not verdicts[4].feasible
    assert any("infeasible" in n for n in verdicts[4].notes)
    assert verdicts[5].feasible and verdicts[6].feasible
    assert not verdicts[6].worse_than_brute_force
    assert verdicts[7].worse_than_brute_force
    assert any("brute force" in n for n in verdicts[7].notes)


def test_table_rendering(wg_table):
    csv_text = render_csv(wg_table)
    lines = csv_text.strip().splitlines()
    assert lines[0] == ",".join(TABLE_COLUMNS)
    assert lines[2].startswith("5,40502,40502,")
    assert lines[1].endswith(",no")
    pretty = render_pretty(wg_table)
    assert "258089371" in pretty and "D=7" in pretty


def test_report_dict(degrees):
    r = estimate("toy3", 21, 7, 5, degrees[0], degrees[1], 4)
    d = r.to_dict()
    assert d['t'] == 44 and d['k0'] == 637 and d['T'] == 27896
    assert d['feasible'] and d['max_keystream'] is None
    assert r.k_times_t == 28028
