import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampednls import AdmissiblePair, check_assumptions, is_admissible_pair, lemma_c_exponent, make_grid
from dampednls.corpus import mixed_corpus
from dampednls.errors import DomainError
from dampednls.exponents import (INF, as_exponent, conjugate, nonlinearity_norms, nonlinearity_quotients,
                                 pair_for_r, verify_nonlinearity_estimate)
from dampednls.noise import path_stream


@pytest.mark.parametrize("d,p,r,ok", [
    (3, 2, 6, True), (2, 2, "inf", False), (2, 4, 4, True), (1, 4, "inf", True), (3, 2, 7, False),
    (3, 4, 3, True), (2, 3, 3, False), (1, 8, 4, True), (3, "inf", 2, True), (2, "inf", 2, True),
])
def test_admissible_pairs(d, p, r, ok):
    assert is_admissible_pair(d, as_exponent(p), as_exponent(r)) is ok


def test_exact_arithmetic_not_float():
    # 2/p + 3/r = 3/2 with p = 8/3 exactly; a float p misses it by rounding but is read as the fraction
    assert is_admissible_pair(3, Fraction(8, 3), 4)
    assert is_admissible_pair(3, 8 / 3, 4)
    assert not is_admissible_pair(3, Fraction(8, 3) + Fraction(1, 10**9), 4)


@given(d=st.sampled_from([1, 2, 3]), num=st.integers(2, 60), den=st.integers(1, 10))
@settings(max_examples=200)
def test_pair_for_r_completes_pairs(d, num, den):
    r = Fraction(num, den)
    p = pair_for_r(d, r)
    if p is not None:
        assert is_admissible_pair(d, p, r)
        assert 2 / p + d / r == Fraction(d, 2)


def test_admissible_pair_type():
    pr = AdmissiblePair(3, 2, 6)
    assert pr.dual == (2, Fraction(6, 5))
    with pytest.raises(DomainError):
        AdmissiblePair(2, 2, INF)


@given(num=st.integers(2, 10**6), den=st.integers(1, 10**6))
def test_conjugate_involution(num, den):
    g = Fraction(num, den)
    if g > 1:
        assert conjugate(conjugate(g)) == g
        assert 1 / g + 1 / conjugate(g) == 1


def test_conjugate_endpoints():
    assert conjugate(1) == INF and conjugate(INF) == 1
    with pytest.raises(DomainError):
        conjugate(Fraction(1, 2))


def test_assumption_gate_examples():
    assert check_assumptions(2, 0.5, 1).status == "admissible"
    assert check_assumptions(2, 1.5, 1).status == "rejected"
    assert check_assumptions(3, 1.5, -1).status == "admissible-with-flag"
    assert check_assumptions(2, 7.0, -1).status == "admissible"
    assert check_assumptions(3, 2.0, -1).status == "rejected"
    assert check_assumptions(3, Fraction(2, 3), 1).status == "rejected"
    with pytest.raises(DomainError):
        check_assumptions(4, 0.5, 1)


def test_l_infinity_threshold_is_exact():
    thr = (1 + math.sqrt(17)) / 4
    assert check_assumptions(3, Fraction(12807, 10000), -1).status == "admissible"
    assert check_assumptions(3, Fraction(12808, 10000), -1).status == "admissible-with-flag"
    assert Fraction(12807, 10000) < thr < Fraction(12808, 10000)


def test_nonlinearity_exponent_values():
    assert lemma_c_exponent(2, 0.25) == Fraction(4, 3)
    assert lemma_c_exponent(2, 1) == Fraction(4, 3)
    assert lemma_c_exponent(3, 1) == Fraction(6, 5)
    assert lemma_c_exponent(2, Fraction(1, 10)) == Fraction(5, 3)
    with pytest.raises(DomainError):
        lemma_c_exponent(3, 1.6)
    with pytest.raises(DomainError):
        lemma_c_exponent(2, 0)


def test_nonlinearity_exponent_jumps_at_one_half():
    # below 1/2 the branch 2/(2 sigma + 1) tends to 1, while the value at 1/2 is 4/3
    left = lemma_c_exponent(2, Fraction(1, 2) - Fraction(1, 10**6))
    assert abs(left - 1) < Fraction(1, 10**5)
    assert lemma_c_exponent(2, Fraction(1, 2)) == Fraction(4, 3)


@given(s=st.fractions(Fraction(1, 100), Fraction(3, 2)))
def test_nonlinearity_exponent_range(s):
    assert 1 <= lemma_c_exponent(3, s) < 2
    assert 1 < lemma_c_exponent(2, s) < 2


def test_nonlinearity_norm_list():
    assert nonlinearity_norms(3, 1) == [(1, Fraction(6, 5))]
    assert nonlinearity_norms(3, Fraction(5, 4)) == [(1, Fraction(12, 11)), (Fraction(3, 4), Fraction(6, 5))]


def test_quotient_homogeneous_and_zero():
    g = make_grid(2, 32, 12.0)
    u = mixed_corpus(g, 4, path_stream(0, "test"))
    q1 = nonlinearity_quotients(g, u, 1.0, 1, Fraction(4, 3))
    q2 = nonlinearity_quotients(g, 2 * u, 1.0, 1, Fraction(4, 3))
    np.testing.assert_allclose(q1, q2, rtol=1e-8)
    assert np.isnan(nonlinearity_quotients(g, np.zeros((1,) + g.shape, complex), 1.0, 1, 1.5)[0])


def test_verify_small_corpus_reports():
    rep = verify_nonlinearity_estimate(make_grid(2, 32, 12.0), 0.5, 40)
    d = rep.to_dict()
    assert d["norms"] == ["H^(1,4/3)"] and d["gate"] == "admissible"
    assert rep.fit_max[0] > 0


def test_verify_requires_gate():
    with pytest.raises(DomainError):
        verify_nonlinearity_estimate(make_grid(3, 16, 8.0), 2.5, 10)
