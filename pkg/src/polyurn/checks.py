"""Statistical and pathwise checks bundled by ``polyurn validate``."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .core import UrnParams, coupled_equal_fitness, coupled_first_tie, derive_seed, simulate_batch
from .embedding import embedded_batch
from .observables import intensity_tail, unit_grid
from .oracle import exact_state_distribution
from .theory import intensity_upper_bound

SIGNIFICANCE = 1e-3
# one (beta, r) pair per duration/intensity cell of the regime table
REGIME_GRID = [(0.0, 1.0), (0.4, 1.0), (0.8, 1.0), (1.0, 1.0), (1.5, 1.0),
               (0.5, 1.2), (1.0, 1.2), (2.0, 1.2)]


@dataclass
class CheckResult:
    suite: str
    check: str
    passed: bool
    stats: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def pooled_chi2(observed: dict, expected_probs: dict, n: int, min_expected: float = 5.0):
    """Chi-square goodness of fit after pooling cells with expected count below ``min_expected``.

    Returns ``(statistic, dof, p_value)``.  Observed states outside the
    expected support make the test fail outright (p = 0).
    """
    if set(observed) - set(expected_probs):
        return float("inf"), 0, 0.0
    keys = sorted(expected_probs)
    exp = np.array([expected_probs[k] * n for k in keys])
    obs = np.array([observed.get(k, 0) for k in keys], dtype=np.float64)
    big = exp >= min_expected
    e_cells = list(exp[big])
    o_cells = list(obs[big])
    if (~big).any():
        e_cells.append(exp[~big].sum())
        o_cells.append(obs[~big].sum())
    e = np.array(e_cells)
    o = np.array(o_cells)
    if len(e) < 2:
        return 0.0, 0, 1.0
    e *= o.sum() / e.sum()
    res = stats.chisquare(o, e)
    return float(res.statistic), len(e) - 1, float(res.pvalue)


def state_counts(summaries) -> dict:
    out = {}
    for s in summaries:
        key = (s.final_state.x1, s.final_state.x2)
        out[key] = out.get(key, 0) + 1
    return out


def sampler_vs_oracle(sampler, params, t, n_runs, seed):
    exact = exact_state_distribution(params, t)
    batch = sampler(params, t, n_runs, seed)
    return pooled_chi2(state_counts(batch), exact.entries, n_runs)


def oracle_suite(n_runs=20000, seed=1, sampler=simulate_batch, name="oracle", times=(8, 16)):
    out = []
    for beta, r in REGIME_GRID:
        for t in times:
            params = UrnParams(beta, r, (1, 1))
            chi2, dof, p = sampler_vs_oracle(sampler, params, t, n_runs, derive_seed(seed, t))
            out.append(CheckResult(name, f"beta={beta},r={r},t={t}", p > SIGNIFICANCE,
                                   {"chi2": chi2, "dof": dof, "p_value": p, "n_runs": n_runs}))
    return out


def embedding_suite(n_runs=20000, seed=2):
    return oracle_suite(n_runs, seed, embedded_batch, "embedding")


def equal_fitness_violations(beta_strong, beta_weak, horizon, n_runs, seed, x0=(1, 1)):
    """Count coupled paths breaking gap or tie-count ordering."""
    strong, weak = UrnParams(beta_strong, 1.0, x0), UrnParams(beta_weak, 1.0, x0)
    bad = 0
    for i in range(n_runs):
        pair = coupled_equal_fitness(strong, weak, horizon, derive_seed(seed, i))
        ga, gb = pair.gaps()
        na, nb = pair.tie_counts()
        bad += bool(np.any(ga < gb) or np.any(gb < 0) or np.any(na > nb))
    return bad


def first_tie_violations(params_a, params_b, horizon, n_runs, seed):
    """Count coupled paths where ``a`` ties first, including ``a`` tying while ``b`` never does."""
    bad = 0
    for i in range(n_runs):
        ta, tb = coupled_first_tie(params_a, params_b, horizon, derive_seed(seed, i)).first_ties()
        bad += ta is not None and (tb is None or ta < tb)
    return bad


EQUAL_FITNESS_PAIRS = [(1.2, 0.8), (2.0, 1.0), (1.0, 0.3)]
FIRST_TIE_PAIRS = [
    (UrnParams(1.5, 1.2, (4, 1)), UrnParams(1.0, 1.1, (3, 2))),
    (UrnParams(1.0, 1.2, (1, 4)), UrnParams(0.5, 1.2, (2, 3))),
    (UrnParams(2.0, 1.5, (5, 1)), UrnParams(2.0, 1.0, (4, 2))),
]


def dominance_suite(n_runs=1000, horizon=10000, seed=3):
    out = []
    for bs, bw in EQUAL_FITNESS_PAIRS:
        bad = equal_fitness_violations(bs, bw, horizon, n_runs, seed)
        out.append(CheckResult("dominance", f"equal-fitness beta={bs} vs {bw}", bad == 0,
                               {"violations": bad, "n_runs": n_runs}))
    for a, b in FIRST_TIE_PAIRS:
        bad = first_tie_violations(a, b, horizon, n_runs, seed)
        out.append(CheckResult("dominance", f"first-tie {a} vs {b}", bad == 0,
                               {"violations": bad, "n_runs": n_runs}))
    return out


def bound_excess(curve, r, x0):
    """Largest ``ccdf - 3 stderr - bound`` over the curve (positive means a violation)."""
    bound = intensity_upper_bound(0.0, r, x0, curve.grid)
    return float(np.max(curve.ccdf - 3 * curve.stderr - bound))


def bounds_suite(n_runs=10000, horizon=10000, seed=4, r=1.2, betas=(0.5, 1.0, 2.0)):
    out = []
    for beta in betas:
        params = UrnParams(beta, r, (1, 1))
        batch = simulate_batch(params, horizon, n_runs, derive_seed(seed, int(beta * 100)))
        curve = intensity_tail(batch, unit_grid(1, 100))
        excess = bound_excess(curve, r, params.x0)
        out.append(CheckResult("bounds", f"intensity bound beta={beta},r={r}", excess <= 0,
                               {"max_excess": excess, "n_runs": n_runs}))
    return out


SUITES = {
    "oracle": oracle_suite,
    "embedding": embedding_suite,
    "dominance": dominance_suite,
    "bounds": bounds_suite,
}


def run_suite(name: str, scale: float = 1.0):
    """Run one suite (or ``all``); ``scale`` multiplies run counts."""
    if name == "all":
        return [r for n in SUITES for r in run_suite(n, scale)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    fn = SUITES[name]
    defaults = {"oracle": 20000, "embedding": 20000, "dominance": 1000, "bounds": 10000}
    return fn(n_runs=max(1, int(defaults[name] * scale)))
