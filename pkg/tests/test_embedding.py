import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chi2_pvalue, final_state_counts
from polyurn.core import UrnParams, derive_seed, simulate, simulate_batch, transition_probabilities
from polyurn.embedding import (
    delta_samples,
    embedded_batch,
    embedded_trajectory,
    sample_delta,
    sample_partial_sum,
)
from polyurn.oracle import exact_state_distribution


def test_empty_range_is_zero():
    p = UrnParams(1.0)
    assert sample_partial_sum(1, 5, 5, p, 1) == 0.0
    assert sample_partial_sum(2, 1, 1, p, 1) == 0.0


def test_range_validation():
    with pytest.raises(ValueError):
        sample_partial_sum(1, 5, 4, UrnParams(1.0), 1)
    with pytest.raises(ValueError):
        sample_partial_sum(3, 1, 4, UrnParams(1.0), 1)


def test_single_clock_is_unit_exponential():
    draws = sample_partial_sum(1, 1, 2, UrnParams(0.0), 7, size=100_000)
    assert abs(draws.mean() - 1.0) < 0.02
    # exponential: P[X > 1] = e^-1
    assert abs(np.mean(draws > 1) - math.exp(-1)) < 0.005


def test_harmonic_mean():
    draws = sample_partial_sum(1, 1, 101, UrnParams(1.0), 8, size=100_000)
    h100 = math.fsum(1 / j for j in range(1, 101))
    assert h100 == pytest.approx(5.187, abs=1e-3)
    assert abs(draws.mean() - h100) < 0.05


@pytest.mark.parametrize("color, beta, r, x, y", [(1, 0.5, 1.0, 3, 40), (2, 1.5, 2.0, 2, 30), (2, 0.0, 1.5, 1, 4)])
def test_mean_identity(color, beta, r, x, y):
    p = UrnParams(beta, r)
    f = 1.0 if color == 1 else 1.0 / r
    draws = sample_partial_sum(color, x, y, p, 5, size=50_000)
    mean = math.fsum(1 / (f * j**beta) for j in range(x, y))
    assert abs(draws.mean() - mean) < 3 * draws.std() / math.sqrt(len(draws))


@given(st.floats(0, 2), st.integers(1, 20), st.integers(0, 30), st.integers(0, 2**32))
def test_partial_sums_increase_along_one_stream(beta, x, extra, seed):
    p = UrnParams(beta)
    a = sample_partial_sum(1, x, x + extra, p, seed)
    b = sample_partial_sum(1, x, x + extra + 1, p, seed)
    assert b > a >= 0


def test_long_sublinear_sum_is_accurate():
    # many tiny terms: compensated summation keeps the mean identity within 3 standard errors
    p = UrnParams(0.3)
    draws = sample_partial_sum(1, 1, 20_000, p, 3, size=400)
    mean = math.fsum(j**-0.3 for j in range(1, 20_000))
    assert abs(draws.mean() - mean) < 3 * draws.std() / math.sqrt(len(draws))


def test_embedded_linear_urn_uniform_at_two():
    n = 100_000
    batch = embedded_batch(UrnParams(1.0), 2, n, 31)
    exact = exact_state_distribution(UrnParams(1.0), 2)
    assert chi2_pvalue(final_state_counts(batch), exact.entries, n) > 1e-3


def test_embedded_one_step_probability():
    n = 100_000
    p = UrnParams(2.0, 1.2, (2, 1))
    batch = embedded_batch(p, 1, n, 32)
    hits = sum(s.final_state.x1 == 3 for s in batch)
    p1 = transition_probabilities((2, 1), p)[0]
    assert p1 == pytest.approx(0.8276, abs=1e-4)
    assert abs(hits / n - p1) < 3 * math.sqrt(p1 * (1 - p1) / n)


def test_embedded_and_direct_total_variation():
    n = 100_000
    p = UrnParams(1.5, 1.2, (1, 1))
    exact = exact_state_distribution(p, 8)
    emb = final_state_counts(embedded_batch(p, 8, n, 33))
    direct = final_state_counts(simulate_batch(p, 8, n, 34))
    keys = exact.entries.keys()
    tv = 0.5 * sum(abs(emb.get(k, 0) - direct.get(k, 0)) / n for k in keys)
    assert tv < 0.01
    assert chi2_pvalue(emb, exact.entries, n) > 1e-3


def test_embedded_trajectory_schema_matches_direct():
    p = UrnParams(1.2, 1.1, (2, 2))
    a = embedded_trajectory(p, 300, 5)
    b = simulate(p, 300, 5)
    assert type(a) is type(b)
    assert a.tie_times[0] == 0 and a.final_state.x1 + a.final_state.x2 == 304
    assert np.all((a.tie_times + 4) % 2 == 0)
    assert embedded_batch(p, 300, 1, 9)[0] == embedded_trajectory(p, 300, derive_seed(9, 0))


def test_delta_zero_for_empty_targets():
    d = sample_delta(UrnParams(1.5, 1.2, (2, 3)), 2, 3, 1)
    assert d.value == 0.0
    assert d.targets == (2, 3) and d.x0 == (2, 3)


def test_delta_sign_symmetry():
    values, _ = delta_samples(UrnParams(1.0), 6, 6, 100_000, 2)
    assert abs(np.mean(values > 0) - 0.5) < 0.005


def test_delta_race_matches_exact_tie_probability():
    p = UrnParams(1.5)
    n = 100_000
    values, nxt = delta_samples(p, 5, 5, n, 4)
    hit = np.mean((-nxt[:, 0] < values) & (values < nxt[:, 1]))
    exact = exact_state_distribution(p, 8).prob(5, 5)
    assert abs(hit - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


def test_delta_sample_flags_visit():
    d = sample_delta(UrnParams(1.5), 5, 5, 11)
    assert d.visits_target == (-d.next_clocks[0] < d.value < d.next_clocks[1])
