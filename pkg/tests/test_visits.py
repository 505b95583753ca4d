import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import betaln

from conftest import gf_visit_law
from polyurn.visits import lambda_n, log_nth_visit_pmf, nth_visit_table, rw_nth_visit_pmf


def test_small_examples():
    assert rw_nth_visit_pmf(1, 1, 0) == 0.5
    assert rw_nth_visit_pmf(2, 0, 1) == 0.5
    assert rw_nth_visit_pmf(1, 0, 0) == 1.0


def test_argument_validation():
    with pytest.raises(ValueError):
        rw_nth_visit_pmf(0, 1, 3)
    with pytest.raises(ValueError):
        rw_nth_visit_pmf(3, 1, 1)
    with pytest.raises(ValueError):
        lambda_n(0.5, (1, 1), 3)
    with pytest.raises(ValueError):
        lambda_n(0.8, (1, 2), 3)


def test_dp_matches_generating_function():
    # every (n, d0, ell) with n + d0 + 2 ell <= 40
    for n in range(1, 41):
        for d0 in range(0, 41 - n):
            degree = 40
            law = gf_visit_law(n, d0, degree)
            table = nth_visit_table(n, d0, degree)
            for ell in range(n - 1, (40 - n - d0) // 2 + 1):
                t = d0 + 2 * ell
                assert abs(table[t] - float(law[t])) < 1e-12, (n, d0, ell)
                closed = math.exp(log_nth_visit_pmf(n, d0, ell))
                assert abs(closed - float(law[t])) < 1e-12, (n, d0, ell)


@given(st.integers(1, 6), st.integers(0, 6))
def test_visit_law_is_subprobability(n, d0):
    table = nth_visit_table(n, d0, 400)
    assert np.all(table >= 0)
    assert table.sum() <= 1 + 1e-12
    # odd offsets from d0 are unreachable
    assert np.all(table[(np.arange(401) - d0) % 2 == 1] == 0)


def test_lambda_linear_identities():
    for n in (1, 2, 5, 10, 40):
        assert lambda_n(1.0, (1, 1), n) == pytest.approx(1 / n, rel=1e-7)
        assert lambda_n(1.0, (2, 1), n) == pytest.approx(1 / (n + 1), rel=1e-7)


def test_lambda_against_brute_force_sum():
    # direct sum of the first terms with DP weights; the remainder decays like ell^-2
    n, big = 3, 8000
    table = nth_visit_table(n, 0, 2 * big)
    ell = np.arange(n - 1, big + 1)
    weights = np.exp(betaln(1 + ell, 1 + ell) - betaln(1, 1) + 2 * ell * math.log(2.0))
    terms = weights * table[2 * ell]
    head = math.fsum(terms)
    remainder = terms[-1] * big
    value = lambda_n(1.0, (1, 1), n)
    assert head < value <= head + 1.5 * remainder
    assert value == pytest.approx(head, rel=1e-3)


def test_lambda_theta_law():
    scaled = [lambda_n(0.8, (1, 1), n) * n**0.8 for n in (10, 20, 50, 100, 200)]
    assert all(v > 0 for v in scaled)
    assert max(scaled) / min(scaled) <= 3


def test_lambda_doubling_ratio():
    ratio = lambda_n(0.8, (1, 1), 200) / lambda_n(0.8, (1, 1), 100)
    assert ratio == pytest.approx(2**-0.8, rel=0.15)


@given(st.floats(0.55, 1.0), st.integers(1, 30))
def test_lambda_positive_and_decreasing(beta, n):
    a, b = lambda_n(beta, (2, 1), n), lambda_n(beta, (2, 1), n + 1)
    assert 0 < b < a <= 1 + 1e-9
