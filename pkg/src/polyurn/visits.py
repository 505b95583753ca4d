"""Visits of the simple symmetric random walk to the origin, and the sum Lambda_n.

``T_n`` is the time of the ``n``-th visit to 0 of a walk started at distance
``d0``; the start itself counts as a visit when ``d0 == 0``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln, gammaln


def _check_visit_args(n, d0, ell):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if d0 < 0:
        raise ValueError(f"d0 must be >= 0, got {d0}")
    if ell < n - 1:
        raise ValueError(f"ell must be >= n - 1 = {n - 1}, got {ell}")


def nth_visit_table(n: int, d0: int, t_max: int) -> np.ndarray:
    """``P[T_n = t]`` for ``t = 0 .. t_max`` by dynamic programming.

    The walk is reflected at 0 (distance to the origin), and ``mass[v, k]``
    holds walks at distance ``k`` that have made ``v < n`` visits so far.
    """
    if n < 1 or d0 < 0 or t_max < 0:
        raise ValueError("need n >= 1, d0 >= 0, t_max >= 0")
    width = d0 + t_max + 2
    mass = np.zeros((n, width))
    out = np.zeros(t_max + 1)
    if d0 == 0:
        if n == 1:
            out[0] = 1.0
            return out
        mass[1, 0] = 1.0
    else:
        mass[0, d0] = 1.0
    for t in range(1, t_max + 1):
        nxt = np.zeros_like(mass)
        nxt[:, 1] += mass[:, 0]
        nxt[:, 2:] += 0.5 * mass[:, 1:-1]
        nxt[:, 1:-1] += 0.5 * mass[:, 2:]
        arrived = 0.5 * mass[:, 1]
        out[t] = arrived[n - 1]
        nxt[1:, 0] += arrived[:-1]
        mass = nxt
    return out


def rw_nth_visit_pmf(n: int, d0: int, ell: int) -> float:
    """``P[T_n = d0 + 2 ell]`` computed by dynamic programming."""
    _check_visit_args(n, d0, ell)
    return float(nth_visit_table(n, d0, d0 + 2 * ell)[-1])


def log_nth_visit_pmf(n, d0, ell):
    """Closed form of ``log P[T_n = d0 + 2 ell]``, vectorized and valid for real ``ell``.

    ``T_n - (n - 1)`` is the hitting time of level ``m = n + d0 - 1``, whose law
    is ``(m / k) C(k, (k + m) / 2) 2^-k``.
    """
    ell = np.asarray(ell, dtype=np.float64)
    m = n + d0 - 1
    k = d0 + 2 * ell - (n - 1)
    if m == 0:
        return np.where(k == 0, 0.0, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            np.log(m / k)
            + gammaln(k + 1)
            - gammaln(d0 + ell + 1)
            - gammaln(ell - n + 2)
            - k * math.log(2.0)
        )
    return np.where(k >= m, out, -np.inf)


def _log_terms(beta, x0, n, ell):
    x01, x02 = x0
    d0 = x01 - x02
    ell = np.asarray(ell, dtype=np.float64)
    log_ratio = (
        betaln(x01 + ell, x01 + ell) - betaln(x01, x02) + (d0 + 2 * ell) * math.log(2.0)
    )
    return beta * log_ratio + log_nth_visit_pmf(n, d0, ell)


def lambda_n(beta: float, x0, n: int, rel_tol: float = 1e-8) -> float:
    """``sum_{ell >= n-1} [B(x01+ell, x01+ell) / B(x01, x02) 2^(d0+2 ell)]^beta P[T_n = d0+2 ell]``.

    Terms are summed exactly up to a cutoff ``L``; the rest is the midpoint
    integral of the (smooth in ``ell``) summand.  ``L`` doubles until the
    midpoint-rule error estimate drops below ``rel_tol`` of the total.
    """
    x01, x02 = (int(v) for v in x0)
    if not 0.5 < beta <= 1:
        raise ValueError(f"beta must lie in (1/2, 1], got {beta}")
    if not x01 >= x02 >= 1:
        raise ValueError(f"need x01 >= x02 >= 1, got {x0}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n == 1 and x01 == x02:
        return 1.0
    decay = (3.0 + beta) / 2.0
    start = n - 1
    cutoff = start + max(1000, 8 * n * n)
    while True:
        ell = np.arange(start, cutoff)
        logs = _log_terms(beta, (x01, x02), n, ell)
        top = logs.max()
        head = math.fsum(np.exp(logs - top))
        last = math.exp(_log_terms(beta, (x01, x02), n, cutoff) - top)
        # integrate over y = log(s / s0), where the power-law tail decays exponentially;
        # past s1 the log-gamma differences cancel badly, so the pure power law takes over
        s0 = cutoff - 0.5
        s1 = max(1e8, 100 * s0)
        tail, _ = quad(
            lambda y: math.exp(_log_terms(beta, (x01, x02), n, s0 * math.exp(y)) - top + y) * s0,
            0.0,
            math.log(s1 / s0),
            epsabs=0.0,
            epsrel=1e-9,
            limit=200,
        )
        tail += math.exp(_log_terms(beta, (x01, x02), n, s1) - top) * s1 / (decay - 1.0)
        total = head + tail
        err = last * decay * (decay + 1) / (24.0 * cutoff)
        if not math.isfinite(total) or total <= 0:
            raise ArithmeticError("lambda_n sum lost finiteness")
        if err <= rel_tol * total:
            return total * math.exp(top)
        cutoff = start + 2 * (cutoff - start)
