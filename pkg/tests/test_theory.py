import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyurn.core import UrnParams
from polyurn.oracle import exact_tie_time_probabilities
from polyurn.theory import (
    duration_asymptote,
    first_visit_gaussian_bounds,
    intensity_upper_bound,
    k_constant,
    k_constant_by_densities,
    no_return_prob,
    predict_regime,
    prediction_json,
    psi_product,
    psi_tilde,
    regime_report,
    rho,
    std_normal_ccdf,
    weibull_rate,
)


def _erf_series(x, terms=80):
    """Maclaurin series of erf, independent of the library routine."""
    total = 0.0
    for n in range(terms):
        total += (-1) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
    return 2 / math.sqrt(math.pi) * total


def test_normal_ccdf_values():
    assert std_normal_ccdf(0.0) == 0.5
    z = 1.959964
    assert std_normal_ccdf(z) == pytest.approx(0.025, abs=1e-7)
    assert std_normal_ccdf(z) == pytest.approx(0.5 * (1 - _erf_series(z / math.sqrt(2))), abs=1e-12)


@given(st.floats(-8, 8))
def test_normal_ccdf_symmetry(z):
    assert std_normal_ccdf(z) + std_normal_ccdf(-z) == pytest.approx(1.0, abs=1e-15)


def test_rho_examples():
    assert rho((10, 6)) == 1.0
    assert rho((3, 3)) == 0.0
    assert rho((1, 4)) == pytest.approx(-3 / math.sqrt(5))
    with pytest.raises(ValueError):
        rho((0, 0))


def test_gaussian_bounds():
    b = first_visit_gaussian_bounds((10, 4), 1.0, 0.1)
    assert b.asymptotic and 0 < b.lower < b.upper < 1
    z = 6 / math.sqrt(14)
    assert b.lower == pytest.approx(2 * std_normal_ccdf(z), rel=1e-12)
    assert first_visit_gaussian_bounds((5, 5), 1.5, 0.2)[:2] == (1.0, 1.0)
    with pytest.raises(ValueError):
        first_visit_gaussian_bounds((3, 1), 0.5, 0.1)
    with pytest.raises(ValueError):
        first_visit_gaussian_bounds((3, 1), 1.0, 0.0)


# --- characteristic functions ------------------------------------------------


def test_psi_at_zero_is_one():
    assert psi_product(0.0, 1.3, 2) == 1.0
    assert psi_tilde(0.0, 1.5, 1.2, (2, 1)) == 1.0


def test_psi_modulus_against_real_product():
    s, beta, x, y = 1.0, 1.0, 1, 50
    direct = 1.0
    for j in range(x, y):
        direct /= 1 + s * s / j ** (2 * beta)
    z = psi_product(s, beta, x, y)
    assert abs(z) ** 2 == pytest.approx(direct, rel=1e-12)
    assert psi_product(s, beta, x, y, symmetric=True).real == pytest.approx(direct, rel=1e-12)


def test_finite_psi_against_complex_product():
    s, beta = 0.7, 1.4
    direct = 1 + 0j
    for j in range(2, 30):
        direct /= 1 - 1j * s / j**beta
    assert psi_product(s, beta, 2, 30) == pytest.approx(direct, rel=1e-13)


@given(st.floats(-50, 50), st.floats(1.05, 3), st.integers(1, 6))
def test_psi_conjugate_symmetry_and_modulus(s, beta, x):
    a, b = psi_product(s, beta, x), psi_product(-s, beta, x)
    assert a == pytest.approx(b.conjugate(), abs=1e-12)
    assert abs(a) <= 1 + 1e-12


# --- the constant K ----------------------------------------------------------


def test_k_linear_equal_fitness_is_quarter():
    res = k_constant(1.0, 1.0, (1, 1), tol=1e-8)
    assert res.value == pytest.approx(0.25, abs=1e-8)
    assert abs(res.imag_residue) < 1e-8


@pytest.mark.parametrize("beta, r, x0", [(1.5, 1.0, (1, 1)), (2.0, 1.2, (1, 1)), (1.5, 1.2, (2, 1))])
def test_k_positive_and_converged(beta, r, x0):
    tol = 1e-4
    res = k_constant(beta, r, x0, tol)
    assert res.value > 0
    assert res.abs_error_estimate <= tol
    assert abs(res.imag_residue) < tol
    doubled = k_constant(beta, r, x0, tol, product_scale=2.0, integral_scale=2.0)
    assert abs(doubled.value - res.value) <= 2 * tol


def test_k_domain_errors():
    with pytest.raises(ValueError):
        k_constant(0.4, 1.0, (1, 1))
    with pytest.raises(ValueError):
        k_constant(0.9, 1.2, (1, 1))


@pytest.mark.slow
def test_k_two_routes_agree():
    tol = 1e-4
    fourier = k_constant(1.5, 1.0, (1, 1), tol).value
    densities = k_constant_by_densities(1.5, 1.0, (1, 1))
    assert abs(fourier - densities) <= 10 * tol


@pytest.mark.parametrize("beta", [1.0, 1.5, 2.0])
def test_k_governs_exact_tie_probabilities(beta):
    # t^beta P[tie at t] tends to 2^(beta+1) K; extrapolate the last two even
    # times assuming a 1/t correction
    p = exact_tie_time_probabilities(UrnParams(beta), 64)
    k = k_constant(beta, 1.0, (1, 1), 1e-6).value
    ratio = {t: p[t] * t**beta / (2 ** (beta + 1) * k) for t in (32, 64)}
    assert ratio[32] < ratio[64] < 1
    assert (64 * ratio[64] - 32 * ratio[32]) / 32 == pytest.approx(1.0, abs=0.01)


# --- asymptotes and regimes ----------------------------------------------------


def test_duration_asymptote_scaling():
    k = 0.3
    a = duration_asymptote(1.5, 1.0, (1, 1), [100, 200], k=k)
    assert a[1] / a[0] == pytest.approx(2 ** (0.5 - 1.5))
    b = duration_asymptote(2.0, 1.2, (1, 1), [100, 200], k=k)
    assert b[1] / b[0] == pytest.approx(2 ** (1 - 2.0))
    assert b[0] == pytest.approx(0.2 * 2 * k / 100)
    with pytest.raises(ValueError):
        duration_asymptote(0.8, 1.2, (1, 1), 10, k=k)


def test_regime_examples():
    assert predict_regime(0.4, 1.0).duration_tail.family == "always-infinite"
    eq = predict_regime(1.5, 1.0)
    assert eq.duration_tail.exponent == -1.0
    assert eq.intensity_tail.hi_exp == -1.5 and eq.intensity_tail.upper_only
    weib = predict_regime(0.5, 1.2)
    assert weib.duration_tail.family == "weibull-upper"
    assert weib.duration_tail.rate == pytest.approx(-0.2 * 2 * 2**-0.5)
    lin = predict_regime(1.0, 1.2, (2, 1))
    assert lin.duration_tail.lo_exp == pytest.approx(-0.4)
    assert lin.duration_tail.hi_exp == pytest.approx(-0.2 * (2 - 1 / 1.2))
    sup = predict_regime(2.0, 1.2)
    assert sup.duration_tail.exponent == -1.0
    assert sup.intensity_tail.rate == pytest.approx(-0.09531, abs=1e-5)
    assert sup.constants["no_return_prob"] == pytest.approx(1 / 11)


@given(st.floats(0, 3), st.floats(1, 3), st.integers(1, 5), st.integers(1, 5))
def test_every_cell_has_a_prediction(beta, r, a, b):
    pred = predict_regime(beta, r, (a, b))
    assert pred.duration_tail.family and pred.intensity_tail.family
    assert prediction_json(pred).startswith("{")


def test_weibull_rate_example():
    assert weibull_rate(0.5, 1.2, 1) == pytest.approx(-0.2 * 2**-0.5 * 2)


def test_no_return_probability():
    assert no_return_prob(1.2) == pytest.approx(1 / 11)
    assert no_return_prob(1.0) == 0.0
    with pytest.raises(ValueError):
        no_return_prob(0.5)


def test_intensity_bound_examples():
    b = intensity_upper_bound(1.0, 1.2, (1, 1), np.array([1, 5]))
    assert b[0] == 1.0
    assert b[1] == pytest.approx(0.68301, abs=1e-5)
    assert intensity_upper_bound(1.0, 1.2, (3, 1), 1) == pytest.approx(1.2**-2)
    with pytest.raises(ValueError):
        intensity_upper_bound(1.0, 1.0, (1, 1), 3)


@given(st.floats(1.01, 4), st.integers(1, 200))
def test_intensity_bound_decreasing(r, n):
    assert intensity_upper_bound(1.0, r, (1, 1), n + 1) < intensity_upper_bound(1.0, r, (1, 1), n)


def test_regime_report_rows():
    rows = regime_report([0.4, 1.5], [1.0, 1.2], tol=1e-4)
    assert len(rows) == 4
    by_cell = {(row["beta"], row["r"]): row for row in rows}
    assert "K" in by_cell[(1.5, 1.0)] and "K" in by_cell[(1.5, 1.2)]
    assert "K" not in by_cell[(0.4, 1.0)]
