import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy import stats

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str, informational: bool = False):
    tag = "PASS" if passed else "FAIL"
    if informational:
        tag += " (informational)"
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {tag}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture
def criterion():
    return record_criterion


def enumerate_paths(beta: int, r: Fraction, x0, t):
    """Exact law of ``(x1, x2)`` at time ``t`` by summing over all ``2**t`` color sequences.

    Integer ``beta`` and rational ``r`` keep everything in exact rationals.
    """
    law = {}
    for path in itertools.product((1, 2), repeat=t):
        x1, x2 = x0
        p = Fraction(1)
        for c in path:
            a = r * Fraction(x1) ** beta
            b = Fraction(x2) ** beta
            p *= a / (a + b) if c == 1 else b / (a + b)
            x1, x2 = (x1 + 1, x2) if c == 1 else (x1, x2 + 1)
        law[(x1, x2)] = law.get((x1, x2), 0) + p
    return law


def chi2_pvalue(counts: dict, probs: dict, n: int) -> float:
    """Goodness-of-fit p-value; cells expecting fewer than 5 hits are lumped together."""
    assert set(counts) <= set(probs), "sampler produced an unreachable state"
    keys = sorted(probs, key=lambda k: probs[k], reverse=True)
    obs, exp, lump_o, lump_e = [], [], 0, 0.0
    for k in keys:
        e = probs[k] * n
        if e >= 5:
            obs.append(counts.get(k, 0))
            exp.append(e)
        else:
            lump_o += counts.get(k, 0)
            lump_e += e
    if lump_e > 0:
        obs.append(lump_o)
        exp.append(lump_e)
    exp = np.array(exp) * (sum(obs) / sum(exp))
    return float(stats.chisquare(obs, exp).pvalue)


def final_state_counts(summaries) -> dict:
    out = {}
    for s in summaries:
        k = (s.final_state.x1, s.final_state.x2)
        out[k] = out.get(k, 0) + 1
    return out


def _binom_half(k):
    out = Fraction(1)
    for i in range(k):
        out *= (Fraction(1, 2) - i) / (i + 1)
    return out


def _first_passage_coeffs(degree):
    """Coefficients of F(z) = (1 - sqrt(1 - z^2)) / z, the one-level first-passage series."""
    c = [Fraction(0)] * (degree + 1)
    for k in range(1, degree // 2 + 2):
        if 2 * k - 1 <= degree:
            c[2 * k - 1] = -_binom_half(k) * (-1) ** k
    return c


def _poly_mul(a, b, degree):
    out = [Fraction(0)] * (degree + 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b[: degree + 1 - i]):
                out[i + j] += x * y
    return out


def gf_visit_law(n, d0, degree):
    """Law of T_n from z^(n-1) F(z)^(n+d0-1)."""
    f = _first_passage_coeffs(degree)
    poly = [Fraction(0)] * (degree + 1)
    poly[n - 1] = Fraction(1)
    for _ in range(n + d0 - 1):
        poly = _poly_mul(poly, f, degree)
    return poly
