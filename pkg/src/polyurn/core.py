"""Two-color nonlinear Polya urn with fitness: kernel, sampler, couplings."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from ._rng import derive_seed, next_double, stream_state, uniforms

LANES = 32
TIED = 0


@dataclass(frozen=True)
class UrnParams:
    """Feedback strength ``beta``, fitness ratio ``r = f1/f2`` and initial counts."""

    beta: float
    r: float = 1.0
    x0: tuple[int, int] = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "r", float(self.r))
        x0 = tuple(int(v) for v in self.x0)
        object.__setattr__(self, "x0", x0)
        if len(x0) != 2:
            raise ValueError(f"x0 must have two entries, got {self.x0!r}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a finite number >= 0, got {self.beta}")
        if not (self.r >= 1 and math.isfinite(self.r)):
            raise ValueError(f"r must be a finite number >= 1, got {self.r}")
        if min(x0) < 0:
            raise ValueError(f"initial counts must be nonnegative, got {x0}")
        if self.beta > 0 and min(x0) < 1:
            raise ValueError("initial counts must be >= 1 when beta > 0")

    @classmethod
    def from_fitness(cls, beta, f1, f2, x0=(1, 1)):
        if not (f1 >= f2 > 0):
            raise ValueError("fitnesses must satisfy f1 >= f2 > 0")
        return cls(beta, f1 / f2, x0)

    @property
    def total0(self) -> int:
        return self.x0[0] + self.x0[1]


@dataclass(frozen=True)
class UrnState:
    x1: int
    x2: int
    t: int

    def is_valid(self, params: UrnParams) -> bool:
        return (
            self.x1 + self.x2 == params.total0 + self.t
            and self.x1 >= params.x0[0]
            and self.x2 >= params.x0[1]
        )


@dataclass(frozen=True, eq=False)
class TieSummary:
    """Observed ties of one run, censored at ``horizon``.

    ``leader`` is 1 or 2 for the color ahead at the horizon and 0 when tied.
    ``censored`` marks runs whose last observed tie lies beyond the trusted
    range ``horizon / 100``; such runs may well still be competing.
    """

    tie_times: np.ndarray
    last_tie: int | None
    intensity_observed: int
    censored: bool
    final_state: UrnState
    leader: int
    seed: int
    horizon: int
    params: UrnParams

    def __eq__(self, other):
        if not isinstance(other, TieSummary):
            return NotImplemented
        return (
            np.array_equal(self.tie_times, other.tie_times)
            and (self.last_tie, self.intensity_observed, self.censored)
            == (other.last_tie, other.intensity_observed, other.censored)
            and (self.final_state, self.leader, self.seed, self.horizon, self.params)
            == (other.final_state, other.leader, other.seed, other.horizon, other.params)
        )

    __hash__ = None

    @property
    def first_tie(self) -> int | None:
        return int(self.tie_times[0]) if len(self.tie_times) else None

    def tie_time(self, n: int) -> int | None:
        """Time of the ``n``-th observed tie (1-based), or None."""
        return int(self.tie_times[n - 1]) if len(self.tie_times) >= n else None


def trusted_limit(horizon: int) -> float:
    """Largest time (or count) whose tail estimate is trusted at this horizon."""
    return horizon / 100.0


def leader_of(x1: int, x2: int) -> int:
    return 1 if x1 > x2 else 2 if x2 > x1 else TIED


def summarize(tie_times, x1, x2, horizon, params, seed) -> TieSummary:
    ties = np.asarray(tie_times, dtype=np.int64)
    ties.setflags(write=False)
    last = int(ties[-1]) if len(ties) else None
    return TieSummary(
        tie_times=ties,
        last_tie=last,
        intensity_observed=len(ties),
        censored=last is not None and last > trusted_limit(horizon),
        final_state=UrnState(int(x1), int(x2), int(horizon)),
        leader=leader_of(x1, x2),
        seed=int(seed),
        horizon=int(horizon),
        params=params,
    )


def transition_probabilities(state, params: UrnParams) -> tuple[float, float]:
    """Probabilities that the next ball is color 1 or color 2.

    ``state`` is an :class:`UrnState` or an ``(x1, x2)`` pair.
    """
    x1, x2 = (state.x1, state.x2) if isinstance(state, UrnState) else state
    if params.beta > 0 and (x1 <= 0 or x2 <= 0):
        raise ValueError(f"counts must be positive when beta > 0, got {(x1, x2)}")
    a = params.r * _power(x1, params.beta)
    b = _power(x2, params.beta)
    p1 = a / (a + b)
    return p1, 1.0 - p1


def _power(x, beta):
    if beta == 0:
        return 1.0
    if beta == 1:
        return float(x)
    if beta == 2:
        return float(x) * float(x)
    return math.exp(beta * math.log(x))


@lru_cache(maxsize=4)
def weight_table(beta: float, size: int) -> np.ndarray:
    """``j ** beta`` for ``j = 0 .. size - 1`` (with ``0 ** 0 = 1``)."""
    j = np.arange(size, dtype=np.float64)
    if beta == 0:
        w = np.ones(size)
    elif beta == 1:
        w = j
    elif beta == 2:
        w = j * j
    else:
        with np.errstate(divide="ignore"):
            w = np.exp(beta * np.log(j))
    w.setflags(write=False)
    return w


@njit(nogil=True, cache=True)
def _advance(state, x1, x2, scratch, w1, w2, t_start, t_end, tie_buf, tie_cnt):
    """Advance every lane from time ``t_start`` to ``t_end``.

    Returns early, after finishing a whole time step, when a lane fills its
    row of ``tie_buf``; the caller grows the buffer and resumes.  ``scratch``
    is per-lane kernel state that this sampler does not need.
    """
    lanes = x1.shape[0]
    cap = tie_buf.shape[1]
    for t in range(t_start, t_end):
        full = False
        for k in range(lanes):
            u = next_double(state, k)
            a = w1[x1[k]]
            c = u < a / (a + w2[x2[k]])
            x1[k] += c
            x2[k] += 1 - c
            if x1[k] == x2[k]:
                n = tie_cnt[k]
                tie_buf[k, n] = t + 1
                tie_cnt[k] = n + 1
                full |= n + 1 == cap
        if full:
            return t + 1
    return t_end


def _run_lanes(kernel, tables, params, horizon, seeds, initial_cap=64):
    lanes = len(seeds)
    state = np.stack([stream_state(s) for s in seeds])
    x1 = np.full(lanes, params.x0[0], dtype=np.int64)
    x2 = np.full(lanes, params.x0[1], dtype=np.int64)
    tie_buf = np.zeros((lanes, initial_cap), dtype=np.int64)
    tie_cnt = np.zeros(lanes, dtype=np.int64)
    scratch = np.zeros((lanes, 2), dtype=np.float64)
    if x1[0] == x2[0]:
        tie_cnt[:] = 1
    t = 0
    while t < horizon:
        t = kernel(state, x1, x2, scratch, *tables, t, horizon, tie_buf, tie_cnt)
        if tie_cnt.max() >= tie_buf.shape[1]:
            grown = np.zeros((lanes, 2 * tie_buf.shape[1]), dtype=np.int64)
            grown[:, : tie_buf.shape[1]] = tie_buf
            tie_buf = grown
    return [
        summarize(tie_buf[k, : tie_cnt[k]].copy(), x1[k], x2[k], horizon, params, seeds[k])
        for k in range(lanes)
    ]


def _direct_tables(params, horizon):
    w = weight_table(params.beta, max(params.x0) + horizon + 1)
    w1 = w if params.r == 1 else w * params.r
    return w1, w


def simulate(params: UrnParams, horizon: int, seed: int) -> TieSummary:
    """Run one trajectory of ``horizon`` steps and record its ties."""
    _check_horizon(horizon)
    return _run_lanes(_advance, _direct_tables(params, horizon), params, horizon, [seed])[0]


def _check_horizon(horizon):
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")


def run_batch(kernel, tables, params, horizon, n_runs, master_seed, workers=1, first_run=0):
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    _check_horizon(horizon)
    end = first_run + n_runs
    blocks = [range(i, min(i + LANES, end)) for i in range(first_run, end, LANES)]

    def one(block):
        seeds = [derive_seed(master_seed, i) for i in block]
        return _run_lanes(kernel, tables, params, horizon, seeds)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, blocks))
    else:
        parts = [one(b) for b in blocks]
    return [s for part in parts for s in part]


def simulate_batch(params, horizon, n_runs, master_seed, workers=1, first_run=0) -> list[TieSummary]:
    """Independent runs ``first_run .. first_run + n_runs - 1``.

    Run ``i`` uses ``derive_seed(master_seed, i)``, so a batch can be produced
    in pieces.  The result is ordered by run index and does not depend on
    ``workers``.
    """
    tables = _direct_tables(params, horizon)
    return run_batch(_advance, tables, params, horizon, n_runs, master_seed, workers, first_run)


# --- couplings -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Two trajectories driven by the same uniforms ``eta``.

    ``traj_a``/``traj_b`` have shape ``(horizon + 1, 2)``; row ``t`` holds the
    two coordinates at time ``t``.  For ``equal-fitness-sorted`` the rows are
    (min, max) pairs.
    """

    traj_a: np.ndarray
    traj_b: np.ndarray
    mode: str
    eta: np.ndarray = field(repr=False)

    def gaps(self):
        """Per-time gaps; signed ``max - min`` for sorted pairs, ``|x1 - x2|`` otherwise."""
        ga = self.traj_a[:, 1] - self.traj_a[:, 0]
        gb = self.traj_b[:, 1] - self.traj_b[:, 0]
        if self.mode == "first-tie":
            return np.abs(ga), np.abs(gb)
        return ga, gb

    def tie_counts(self):
        """Running tie counts ``N_t`` for both trajectories."""
        ga, gb = self.gaps()
        return np.cumsum(ga == 0), np.cumsum(gb == 0)

    def first_ties(self):
        out = []
        for g in self.gaps():
            hits = np.flatnonzero(g == 0)
            out.append(int(hits[0]) if len(hits) else None)
        return tuple(out)


@njit(cache=True)
def _sorted_path(eta, beta, lo, hi):
    n = eta.shape[0]
    out = np.empty((n + 1, 2), dtype=np.int64)
    out[0, 0] = lo
    out[0, 1] = hi
    for t in range(n):
        if lo < hi:
            a = lo**beta
            if eta[t] <= a / (a + hi**beta):
                lo += 1
            else:
                hi += 1
        else:
            hi += 1
        out[t + 1, 0] = lo
        out[t + 1, 1] = hi
    return out


@njit(cache=True)
def _fitness_path(eta, beta, r, y1, y2):
    n = eta.shape[0]
    out = np.empty((n + 1, 2), dtype=np.int64)
    out[0, 0] = y1
    out[0, 1] = y2
    for t in range(n):
        a = r * y1**beta
        if eta[t] <= a / (a + y2**beta):
            y1 += 1
        else:
            y2 += 1
        out[t + 1, 0] = y1
        out[t + 1, 1] = y2
    return out


def coupled_equal_fitness(params_strong, params_weak, horizon, seed) -> CoupledPair:
    """Sorted (min, max) recursions for two feedback strengths on one stream."""
    if params_strong.r != 1 or params_weak.r != 1:
        raise ValueError("equal-fitness coupling requires r = 1 for both processes")
    if params_strong.x0 != params_weak.x0:
        raise ValueError("both processes must start from the same x0")
    if params_strong.beta < params_weak.beta:
        raise ValueError("params_strong.beta must be >= params_weak.beta")
    eta = uniforms(seed, horizon)
    lo, hi = sorted(params_strong.x0)
    a = _sorted_path(eta, params_strong.beta, lo, hi)
    b = _sorted_path(eta, params_weak.beta, lo, hi)
    return CoupledPair(a, b, "equal-fitness-sorted", eta)


def first_tie_condition(params_a: UrnParams, params_b: UrnParams) -> str | None:
    """Which ordering condition ('i' or 'ii') the pair satisfies, if any."""
    if params_a.beta < params_b.beta:
        return None
    (a1, a2), (b1, b2) = params_a.x0, params_b.x0
    if params_a.r >= params_b.r and a1 >= b1 >= b2 >= a2:
        return "i"
    if params_a.r == params_b.r and a1 <= b1 <= b2 <= a2:
        return "ii"
    return None


def coupled_first_tie(params_a, params_b, horizon, seed) -> CoupledPair:
    """Shared-stream urn pair whose first-tie times are pathwise ordered."""
    if first_tie_condition(params_a, params_b) is None:
        raise ValueError(
            "parameters satisfy neither first-tie ordering condition: need beta >= beta' and "
            "(r >= r', x01 >= x01' >= x02' >= x02) or (r = r', x01 <= x01' <= x02' <= x02)"
        )
    eta = uniforms(seed, horizon)
    a = _fitness_path(eta, params_a.beta, params_a.r, *params_a.x0)
    b = _fitness_path(eta, params_b.beta, params_b.r, *params_b.x0)
    return CoupledPair(a, b, "first-tie", eta)
