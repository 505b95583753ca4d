"""Exponential-clock embedding of the urn.

Color ``k`` owns independent exponential clocks; clock ``j`` has mean
``1 / (f_k * j**beta)`` and rings when the color goes from ``j`` to ``j + 1``
balls.  With fitnesses normalized to ``f1 = 1`` and ``f2 = 1 / r`` the order
in which the two colors' cumulative clocks ring is an urn trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import next_double, stream_state
from .core import TieSummary, UrnParams, _run_lanes, run_batch, weight_table


def fitness(color: int, params: UrnParams) -> float:
    if color == 1:
        return 1.0
    if color == 2:
        return 1.0 / params.r
    raise ValueError(f"color must be 1 or 2, got {color}")


def clock_scales(params: UrnParams, size: int):
    """Mean clock lengths ``1/(f_k j^beta)`` for ``j < size``, one table per color."""
    w = weight_table(params.beta, size)
    with np.errstate(divide="ignore"):
        inv = 1.0 / w
    return inv, inv * params.r


@njit(inline="always")
def _exp_draw(state, k):
    return -math.log1p(-next_double(state, k))


@njit(inline="always")
def _neumaier(total, comp, v):
    s = total + v
    if abs(total) >= abs(v):
        comp += (total - s) + v
    else:
        comp += (v - s) + total
    return s, comp


@njit(nogil=True, cache=True)
def _partial_sums(state, scale, x, y, out):
    for i in range(out.shape[0]):
        total = 0.0
        comp = 0.0
        for j in range(x, y):
            total, comp = _neumaier(total, comp, _exp_draw(state, 0) * scale[j])
        out[i] = total + comp


def _check_range(x, y):
    if y < x:
        raise ValueError(f"need y >= x, got x={x}, y={y}")
    if x < 1 and y > x:
        raise ValueError(f"clock index must start at 1 for a nonempty range, got x={x}")


def sample_partial_sum(color, x, y, params: UrnParams, seed, size=None):
    """Sum of clocks ``x .. y-1`` of ``color``: the time to grow from ``x`` to ``y``.

    Returns a float, or an array of ``size`` independent sums drawn from the
    same stream.
    """
    fitness(color, params)
    _check_range(x, y)
    scale = clock_scales(params, y + 1)[color - 1]
    state = stream_state(seed).reshape(1, 4).copy()
    out = np.empty(1 if size is None else int(size))
    _partial_sums(state, scale, int(x), int(y), out)
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class DeltaSample:
    """One draw of ``S1(x01, y1) - S2(x02, y2)``.

    ``next_clocks`` holds the clocks ``(xi_{1,y1}, xi_{2,y2})`` drawn right
    after the sums, so the urn is at ``(y1, y2)`` at the moment the total
    first reaches ``y1 + y2`` exactly when ``-next_clocks[0] < value < next_clocks[1]``.
    """

    value: float
    x0: tuple[int, int]
    targets: tuple[int, int]
    next_clocks: tuple[float, float]

    @property
    def visits_target(self) -> bool:
        return -self.next_clocks[0] < self.value < self.next_clocks[1]


@njit(nogil=True, cache=True)
def _deltas(state, s1, s2, x01, x02, y1, y2, value, nxt):
    for i in range(value.shape[0]):
        a = 0.0
        ca = 0.0
        for j in range(x01, y1):
            a, ca = _neumaier(a, ca, _exp_draw(state, 0) * s1[j])
        b = 0.0
        cb = 0.0
        for j in range(x02, y2):
            b, cb = _neumaier(b, cb, _exp_draw(state, 0) * s2[j])
        value[i] = (a + ca) - (b + cb)
        nxt[i, 0] = _exp_draw(state, 0) * s1[y1]
        nxt[i, 1] = _exp_draw(state, 0) * s2[y2]


def delta_samples(params: UrnParams, y1: int, y2: int, n: int, seed: int):
    """``n`` joint draws of Delta and the two next clocks, as arrays."""
    x01, x02 = params.x0
    if y1 < x01 or y2 < x02:
        raise ValueError(f"targets {(y1, y2)} lie below x0 = {params.x0}")
    if min(y1, y2) < 1 and params.beta > 0:
        raise ValueError("targets must be >= 1 when beta > 0")
    s1, s2 = clock_scales(params, max(y1, y2) + 1)
    state = stream_state(seed).reshape(1, 4).copy()
    value = np.empty(int(n))
    nxt = np.empty((int(n), 2))
    _deltas(state, s1, s2, x01, x02, int(y1), int(y2), value, nxt)
    return value, nxt


def sample_delta(params: UrnParams, y1: int, y2: int, seed: int) -> DeltaSample:
    value, nxt = delta_samples(params, y1, y2, 1, seed)
    return DeltaSample(float(value[0]), params.x0, (int(y1), int(y2)), (float(nxt[0, 0]), float(nxt[0, 1])))


@njit(nogil=True, cache=True)
def _advance_embedded(state, x1, x2, gap, s1, s2, t_start, t_end, tie_buf, tie_cnt):
    """Lazy two-clock merge; ``gap[k]`` = (pending arrival 1 - pending arrival 2, compensation)."""
    lanes = x1.shape[0]
    cap = tie_buf.shape[1]
    if t_start == 0:
        for k in range(lanes):
            d = _exp_draw(state, k) * s1[x1[k]]
            gap[k, 0] = d - _exp_draw(state, k) * s2[x2[k]]
            gap[k, 1] = 0.0
    for t in range(t_start, t_end):
        full = False
        for k in range(lanes):
            e = _exp_draw(state, k)
            if gap[k, 0] + gap[k, 1] <= 0.0:
                x1[k] += 1
                v = e * s1[x1[k]]
            else:
                x2[k] += 1
                v = -e * s2[x2[k]]
            gap[k, 0], gap[k, 1] = _neumaier(gap[k, 0], gap[k, 1], v)
            if x1[k] == x2[k]:
                n = tie_cnt[k]
                tie_buf[k, n] = t + 1
                tie_cnt[k] = n + 1
                full |= n + 1 == cap
        if full:
            return t + 1
    return t_end


def _embedded_tables(params, horizon):
    return clock_scales(params, max(params.x0) + horizon + 2)


def embedded_trajectory(params: UrnParams, horizon: int, seed: int) -> TieSummary:
    """Urn run generated by racing exponential clocks; same record as ``simulate``."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    tables = _embedded_tables(params, horizon)
    return _run_lanes(_advance_embedded, tables, params, horizon, [seed])[0]


def embedded_batch(params, horizon, n_runs, master_seed, workers=1, first_run=0) -> list[TieSummary]:
    """Embedded counterpart of :func:`polyurn.core.simulate_batch`."""
    tables = _embedded_tables(params, horizon)
    return run_batch(_advance_embedded, tables, params, horizon, n_runs, master_seed, workers, first_run)
