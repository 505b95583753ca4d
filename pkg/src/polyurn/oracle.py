"""Exact small-horizon distributions by forward dynamic programming."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import UrnParams, transition_probabilities

STATE_CAP = 64
CENSORED_CAP = 24


@dataclass(frozen=True)
class ExactDistribution:
    """Law of ``(x1, x2)`` at time ``t``; ``entries`` maps state to probability."""

    t: int
    entries: dict

    def prob(self, x1, x2) -> float:
        return self.entries.get((x1, x2), 0.0)

    def states(self):
        return sorted(self.entries)

    def probabilities(self) -> np.ndarray:
        return np.array([self.entries[s] for s in self.states()])


@dataclass(frozen=True)
class ExactTail:
    """Exact censored tail ``P[metric >= grid[i]]`` with the point masses behind it.

    For ``duration`` the metric is the last tie at or before the horizon
    (``-1`` when the run never ties); for ``intensity`` it is the tie count.
    """

    metric: str
    horizon: int
    grid: np.ndarray
    ccdf: np.ndarray
    pmf: np.ndarray


def _check_cap(value, cap, what):
    if value < 0:
        raise ValueError(f"{what} must be >= 0, got {value}")
    if value > cap:
        raise ValueError(f"{what}={value} exceeds the exact-oracle cap of {cap}")


def _step_probs(params: UrnParams, t: int) -> np.ndarray:
    """``p1`` for every reachable state at time ``t``, indexed by ``x1 - x01``."""
    x01, x02 = params.x0
    return np.array(
        [transition_probabilities((x01 + i, x02 + t - i), params)[0] for i in range(t + 1)]
    )


def _forward(params: UrnParams, horizon: int):
    """Yield ``(t, mass)`` where ``mass[i] = P[x1(t) = x01 + i]``."""
    mass = np.ones(1)
    yield 0, mass
    for t in range(horizon):
        p1 = _step_probs(params, t)
        nxt = np.zeros(t + 2)
        nxt[1:] += mass * p1
        nxt[:-1] += mass * (1.0 - p1)
        mass = nxt
        yield t + 1, mass


def exact_state_distribution(params: UrnParams, t: int) -> ExactDistribution:
    _check_cap(t, STATE_CAP, "t")
    for _, mass in _forward(params, t):
        pass
    x01, x02 = params.x0
    entries = {(x01 + i, x02 + t - i): float(m) for i, m in enumerate(mass) if m > 0}
    return ExactDistribution(t, entries)


def _tie_index(params, t):
    """Offset ``i`` with ``x01 + i == x02 + t - i``, or None if no tie is possible."""
    x01, x02 = params.x0
    twice = x02 + t - x01
    if twice % 2 or not 0 <= twice // 2 <= t:
        return None
    return twice // 2


def exact_tie_time_probabilities(params: UrnParams, horizon: int) -> dict:
    """``{t: P[x1(t) == x2(t)]}`` for ``t = 0 .. horizon``."""
    _check_cap(horizon, STATE_CAP, "horizon")
    out = {}
    for t, mass in _forward(params, horizon):
        i = _tie_index(params, t)
        out[t] = 0.0 if i is None else float(mass[i])
    return out


def exact_censored_tail(params: UrnParams, horizon: int, metric: str) -> ExactTail:
    """Exact law of the observed last tie or tie count up to ``horizon``.

    The DP state is ``(x1 offset, tag)`` where the tag is the tie count or the
    last tie time plus one (zero for no tie yet).
    """
    _check_cap(horizon, CENSORED_CAP, "horizon")
    if metric not in ("duration", "intensity"):
        raise ValueError(f"metric must be 'duration' or 'intensity', got {metric!r}")
    tags = horizon + 2
    mass = np.zeros((1, tags))
    mass[0, 0] = 1.0
    mass = _record_ties(params, 0, mass, metric)
    for t in range(horizon):
        p1 = _step_probs(params, t)[:, None]
        nxt = np.zeros((t + 2, tags))
        nxt[1:] += mass * p1
        nxt[:-1] += mass * (1.0 - p1)
        mass = _record_ties(params, t + 1, nxt, metric)
    pmf = mass.sum(axis=0)
    ccdf = np.cumsum(pmf[::-1])[::-1]
    grid = np.arange(tags) - (1 if metric == "duration" else 0)
    return ExactTail(metric, horizon, grid, np.minimum(ccdf, 1.0), pmf)


def _record_ties(params, t, mass, metric):
    i = _tie_index(params, t)
    if i is None:
        return mass
    row = mass[i]
    new = np.zeros_like(row)
    if metric == "intensity":
        new[1:] = row[:-1]
    else:
        new[t + 1] = row.sum()
    mass[i] = new
    return mass


def dump_csv(params: UrnParams, horizon: int, path) -> None:
    """Write every exact state probability up to ``horizon`` as ``t,x1,x2,prob``."""
    _check_cap(horizon, STATE_CAP, "horizon")
    x01, x02 = params.x0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "prob"])
        for t, mass in _forward(params, horizon):
            for i, m in enumerate(mass):
                w.writerow([t, x01 + i, x02 + t - i, repr(float(m))])
