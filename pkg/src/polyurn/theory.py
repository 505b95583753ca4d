"""Analytic side of the urn: characteristic functions, the constant K, tail laws."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.special import zeta

from .core import UrnParams
from .visits import lambda_n, nth_visit_table, rw_nth_visit_pmf  # noqa: F401  (re-exported)

SERIES_TERMS = 60


def std_normal_ccdf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def rho(x) -> float:
    """Normalized lead ``(x1 - x2) / sqrt(x1 + x2)``."""
    x1, x2 = x
    total = x1 + x2
    if total <= 0:
        raise ValueError(f"rho needs a positive total, got {x}")
    return (x1 - x2) / math.sqrt(total)


class GaussianBounds(NamedTuple):
    lower: float
    upper: float
    asymptotic: bool = True


def first_visit_gaussian_bounds(x, beta: float, epsilon: float) -> GaussianBounds:
    """Asymptotic bounds on the probability that an equal-fitness urn at ``x`` ever ties.

    Valid up to corrections of order ``(x1 + x2) ** -beta``.
    """
    if beta <= 0.5:
        raise ValueError(f"beta must exceed 1/2, got {beta}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    z = abs(rho(x))
    c_upper = (1.0 - epsilon) * math.sqrt(2 * beta - 1)
    c_lower = math.sqrt(2 * beta - 1)
    return GaussianBounds(2 * std_normal_ccdf(c_lower * z), 2 * std_normal_ccdf(c_upper * z))


# --- characteristic functions ---------------------------------------------


def _log_factors(s, beta, lo, hi):
    """``sum_{j=lo}^{hi-1} -log(1 - i s / j^beta)`` as (real, imag)."""
    if hi <= lo:
        return 0.0, 0.0
    u = s / np.arange(lo, hi, dtype=np.float64) ** beta
    return -0.5 * math.fsum(np.log1p(u * u)), math.fsum(np.arctan(u))


def _zeta_tail(coeffs, beta, start, scale):
    """``sum_m c_m / m * zeta(m beta, start)`` for ``m = 1 ..`` and its remainder bound.

    ``coeffs[m - 1]`` is the complex numerator of order ``m`` with
    ``|c_m| <= 2 scale^m``; zero numerators are skipped so a divergent
    ``zeta(beta)`` is never formed.
    """
    total = 0j
    for m, c in enumerate(coeffs, start=1):
        if c != 0:
            total += c / m * zeta(m * beta, start)
    m = len(coeffs) + 1
    q = scale / start**beta
    bound = 2 * q**m * (1 + start / (m * beta - 1)) / (1 - q)
    return total, bound


def _tail_start(scale, beta, floor):
    """Smallest index ``J >= floor`` with ``scale / J^beta <= 1/2``."""
    return max(int(floor), int(math.ceil((2.0 * scale) ** (1.0 / beta))) + 1)


def psi_with_error(s, beta, x, y=math.inf, symmetric=False):
    """``psi_product`` together with a bound on its truncation error."""
    if x < 1:
        raise ValueError(f"x must be >= 1, got {x}")
    if s == 0:
        return 1.0 + 0j, 0.0
    if math.isinf(y):
        if symmetric:
            if beta <= 0.5:
                raise ValueError("the symmetric infinite product needs beta > 1/2")
        elif beta <= 1:
            raise ValueError("the infinite product diverges for beta <= 1; pass symmetric=True")
        J = _tail_start(abs(s), beta, x)
        re, im = _log_factors(s, beta, x, J)
        coeffs = [(1j * s) ** m for m in range(1, SERIES_TERMS + 1)]
        if symmetric:
            coeffs = [c + c.conjugate() for c in coeffs]
            re, im = 2 * re, 0.0
        tail, err = _zeta_tail(coeffs, beta, J, abs(s))
        log_value = complex(re, im) + tail
    else:
        if y < x:
            raise ValueError(f"need y >= x, got x={x}, y={y}")
        re, im = _log_factors(s, beta, x, int(y))
        if symmetric:
            re, im = 2 * re, 0.0
        log_value, err = complex(re, im), 0.0
    value = np.exp(log_value)
    return complex(value), abs(value) * err


def psi_product(s: float, beta: float, x: int, y=math.inf, symmetric: bool = False) -> complex:
    """``prod_{j=x}^{y-1} (1 - i s / j^beta)^-1``, the characteristic function of a clock sum.

    ``y = inf`` needs ``beta > 1`` unless ``symmetric`` is set, in which case
    the squared modulus ``prod (1 + s^2 / j^(2 beta))^-1`` is returned.
    """
    return psi_with_error(s, beta, x, y, symmetric)[0]


def psi_tilde_with_error(s, beta, r, x0, product_scale=1.0):
    """``lim_J Psi(s; beta, x01, J) * conj(Psi(r s; beta, x02, J))`` with a series bound."""
    x01, x02 = x0
    if s == 0:
        return 1.0 + 0j, 0.0
    J = int(product_scale * _tail_start(r * abs(s), beta, max(x01, x02)))
    re1, im1 = _log_factors(s, beta, x01, J)
    re2, im2 = _log_factors(r * s, beta, x02, J)
    coeffs = [(1j * s) ** m + (-1j * r * s) ** m for m in range(1, SERIES_TERMS + 1)]
    if r == 1:
        coeffs[0] = 0j  # cancels exactly; zeta(beta) may diverge
    tail, err = _zeta_tail(coeffs, beta, J, r * abs(s))
    value = np.exp(complex(re1 + re2, im1 - im2) + tail)
    return complex(value), abs(value) * err


def psi_tilde(s, beta, r, x0, product_scale=1.0) -> complex:
    """Characteristic function of the race between the two colors' total clocks."""
    return psi_tilde_with_error(s, beta, r, x0, product_scale)[0]


def _abs_psi_tilde(s, beta, r, x0):
    return abs(psi_tilde(s, beta, r, x0))


def _tail_envelope(S, beta, r, x0, factors=4):
    """Bound on ``int_S^inf |psi_tilde|``.

    Past ``S`` each factor ``(1 + s^2/c)^-1/2`` only shrinks, so keeping the
    ``factors`` smallest-``c`` ones gives ``|psi_tilde(s)| <= |psi_tilde(S)| Q / s^factors``.
    """
    x01, x02 = x0
    cs = []
    for j in range(x01, x01 + factors):
        cs.append(j ** (2 * beta))
    for j in range(x02, x02 + factors):
        cs.append(j ** (2 * beta) / (r * r))
    cs = sorted(cs)[:factors]
    log_q = sum(0.5 * math.log(c + S * S) for c in cs)
    log_bound = math.log(_abs_psi_tilde(S, beta, r, x0)) + log_q + (1 - factors) * math.log(S)
    return math.exp(log_bound) / (factors - 1)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    product_truncation: int
    integral_truncation: float
    imag_residue: float = 0.0
    params: dict = field(default_factory=dict)


def _check_k_domain(beta, r):
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if not (beta > 1 or (beta > 0.5 and r == 1)):
        raise ValueError(f"K is defined for beta > 1, or beta > 1/2 with r = 1; got beta={beta}, r={r}")


def k_constant(beta, r, x0, tol=1e-6, product_scale=1.0, integral_scale=1.0) -> QuadratureResult:
    """``K = (1/2 pi) int psi_tilde(s) ds``, the density at zero of the clock race.

    The integral over the real line is folded onto ``[0, S]`` as
    ``(1/pi) int Re psi_tilde``.  ``S`` doubles until the envelope bound on the
    discarded tail is below ``tol / 4``.  The imaginary part is integrated
    over ``[-S, S]`` independently and reported as ``imag_residue``.
    ``product_scale`` and ``integral_scale`` enlarge the truncations for
    self-consistency checks.
    """
    _check_k_domain(beta, r)
    x0 = tuple(int(v) for v in x0)
    if min(x0) < 1:
        raise ValueError(f"initial counts must be >= 1, got {x0}")
    S = 4.0
    while _tail_envelope(S, beta, r, x0) / math.pi > tol / 4:
        S *= 2
        if S > 1e7:
            raise ArithmeticError("psi_tilde decays too slowly to certify K")
    S *= integral_scale
    tail_bound = _tail_envelope(S, beta, r, x0) / math.pi

    def piece(fn, a, b):
        return quad(fn, a, b, epsabs=tol / 64, epsrel=1e-12, limit=400)

    edges = np.concatenate([[0.0], np.geomspace(min(1.0, S), S, 24)])
    real = err = imag_pos = imag_neg = series = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        v, e = piece(lambda s: psi_tilde(s, beta, r, x0, product_scale).real, a, b)
        real += v
        err += e
        imag_pos += piece(lambda s: psi_tilde(s, beta, r, x0, product_scale).imag, a, b)[0]
        imag_neg += piece(lambda s: psi_tilde(-s, beta, r, x0, product_scale).imag, a, b)[0]
    series = psi_tilde_with_error(S, beta, r, x0, product_scale)[1] + psi_tilde_with_error(
        1.0, beta, r, x0, product_scale
    )[1]
    value = real / math.pi
    abs_err = (err + S * series) / math.pi + tail_bound
    if not math.isfinite(value) or abs_err > tol:
        raise ArithmeticError(f"K quadrature did not reach tol={tol} (error estimate {abs_err:.3g})")
    J = int(product_scale * _tail_start(r * S, beta, max(x0)))
    return QuadratureResult(
        value=value,
        abs_error_estimate=abs_err,
        product_truncation=J,
        integral_truncation=S,
        imag_residue=abs(imag_pos + imag_neg) / (2 * math.pi),
        params={"beta": beta, "r": r, "x0": list(x0), "tol": tol},
    )


def _gauss_legendre_grid(upper, panels, order=16):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    s = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return s, w


def clock_sum_density(z, beta, x, scale=1.0, s_max=None, panels=400):
    """Density of ``scale * sum_{j>=x} xi_j`` (clock ``j`` has mean ``j^-beta``) at points ``z``.

    Fourier inversion ``(1/pi) int_0^inf Re[phi(s) e^{-isz}] ds`` with a
    composite Gauss-Legendre rule on ``[0, s_max]``.
    """
    if beta <= 1:
        raise ValueError("the total clock sum is finite only for beta > 1")
    if s_max is None:
        s_max = 8.0
        while abs(psi_product(s_max, beta, x)) > 1e-14:
            s_max *= 1.5
    s, w = _gauss_legendre_grid(s_max, panels)
    phi = np.array([psi_product(v, beta, x) for v in s * scale])
    z = np.asarray(z, dtype=np.float64)
    kernel = np.exp(-1j * np.outer(z, s))
    return (kernel @ (w * phi)).real / math.pi


def k_constant_by_densities(beta, r, x0, z_max=None, z_panels=200, s_panels=400) -> float:
    """``K`` as ``int h1(z) h2(z) dz``, the convolution form of the race density at zero.

    ``h1`` is the density of color 1's total clock time and ``h2`` that of
    color 2's (clocks scaled by ``r``).  Independent of the ``psi_tilde``
    quadrature; only defined for ``beta > 1``.
    """
    x01, x02 = x0
    if z_max is None:
        # the slowest clock of color k has mean (r if k == 2) / x0k^beta
        z_max = 45.0 * max(1.0 / x01**beta, r / x02**beta)
    z, w = _gauss_legendre_grid(z_max, z_panels)
    h1 = clock_sum_density(z, beta, x01, 1.0, panels=s_panels)
    h2 = clock_sum_density(z, beta, x02, r, panels=s_panels)
    return float(np.sum(w * h1 * h2))


@lru_cache(maxsize=64)
def _cached_k(beta, r, x0, tol):
    return k_constant(beta, r, x0, tol).value


def duration_asymptote(beta, r, x0, t, k=None, tol=1e-6) -> float:
    """Leading-order ``P[T >= t]`` for the power-law duration regimes.

    ``k`` may be supplied to reuse a precomputed ``K``.
    """
    x0 = tuple(int(v) for v in x0)
    if r == 1 and beta > 0.5:
        prefactor = 2 ** (beta - 0.5) / math.sqrt((2 * beta - 1) * math.pi)
        exponent = 0.5 - beta
    elif r > 1 and beta > 1:
        prefactor = (r - 1) * 2 ** (beta - 1) / (beta - 1)
        exponent = 1 - beta
    else:
        raise ValueError(f"no power-law asymptote for beta={beta}, r={r}")
    if k is None:
        k = _cached_k(float(beta), float(r), x0, tol)
    return prefactor * k * np.asarray(t, dtype=np.float64) ** exponent


# --- regimes ---------------------------------------------------------------


@dataclass(frozen=True)
class TailLaw:
    """One tail family with its parameters; unused fields stay None.

    Families: ``always-infinite``; ``power-law`` (exponent); ``weibull-upper``
    (rate, shape, meaning ``log P <= rate * t^shape``); ``power-law-range`` and
    ``power-law-bounds`` (tail between ``t^lo_exp`` and ``t^hi_exp``; with
    ``upper_only`` just ``O(t^hi_exp)``); ``exponential`` (``log P ~ rate * n``).
    """

    family: str
    exponent: float | None = None
    rate: float | None = None
    shape: float | None = None
    lo_exp: float | None = None
    hi_exp: float | None = None
    upper_only: bool = False


@dataclass(frozen=True)
class RegimePrediction:
    beta: float
    r: float
    x0: tuple[int, int]
    duration_tail: TailLaw
    intensity_tail: TailLaw
    constants: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        def headline(law):
            for name in ("exponent", "rate", "lo_exp"):
                v = getattr(law, name)
                if v is not None:
                    return v
            return None

        return {
            "beta": self.beta,
            "r": self.r,
            "duration_family": self.duration_tail.family,
            "duration_exponent_or_rate": headline(self.duration_tail),
            "intensity_family": self.intensity_tail.family,
            "intensity_rate": headline(self.intensity_tail),
        }


def weibull_rate(beta, r, x01) -> float:
    return (1 - r) / (1 - beta) * 2 ** (beta - 1) * x01**beta


def predict_regime(beta: float, r: float, x0=(1, 1)) -> RegimePrediction:
    """The duration and intensity tail laws for one ``(beta, r)`` cell."""
    params = UrnParams(beta, r, x0)
    x01 = params.x0[0]
    if r == 1:
        if beta <= 0.5:
            duration = TailLaw("always-infinite")
            intensity = TailLaw("always-infinite")
        else:
            duration = TailLaw("power-law", exponent=0.5 - beta)
            if beta < 1:
                intensity = TailLaw("power-law-bounds", lo_exp=-beta, hi_exp=0.5 - beta)
            elif beta == 1:
                intensity = TailLaw("power-law-bounds", lo_exp=-1.0, hi_exp=-1.0)
            else:
                intensity = TailLaw("power-law-bounds", hi_exp=-beta, upper_only=True)
    else:
        if beta < 1:
            duration = TailLaw("weibull-upper", rate=weibull_rate(beta, r, x01), shape=1 - beta)
        elif beta == 1:
            duration = TailLaw(
                "power-law-range", lo_exp=(1 - r) * x01, hi_exp=(1 - r) * (x01 - 1 / r)
            )
        else:
            duration = TailLaw("power-law", exponent=1 - beta)
        intensity = TailLaw("exponential", rate=math.log(2 / (r + 1)))
    constants = {}
    if r > 1:
        constants["no_return_prob"] = no_return_prob(r)
        constants["intensity_prefactor"] = r ** (-max(params.x0[0] - params.x0[1], 0)) * (r + 1) / 2
    return RegimePrediction(params.beta, params.r, params.x0, duration, intensity, constants)


def no_return_prob(r: float) -> float:
    """Probability that the ``beta = 0`` walk started from a tie never ties again."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    return (r - 1) / (r + 1)


def intensity_upper_bound(beta, r, x0, n) -> float:
    """``r^-(x01-x02)^+ (2/(r+1))^(n-1)``, an upper bound on ``P[N >= n]`` for every ``beta``."""
    if r <= 1:
        raise ValueError(f"the intensity bound needs r > 1, got {r}")
    if np.any(np.asarray(n) < 1):
        raise ValueError("n must be >= 1")
    lead = max(int(x0[0]) - int(x0[1]), 0)
    return r ** (-lead) * (2 / (r + 1)) ** (np.asarray(n, dtype=np.float64) - 1)


def regime_report(betas, rs, x0=(1, 1), tol=None) -> list[dict]:
    """One row per ``(beta, r)``; with ``tol`` set, K and its error join the row where defined."""
    rows = []
    for beta in betas:
        for r in rs:
            pred = predict_regime(beta, r, x0)
            row = pred.to_row()
            if tol is not None and (beta > 1 or (beta > 0.5 and r == 1)):
                res = k_constant(beta, r, x0, tol)
                row["K"] = res.value
                row["K_error"] = res.abs_error_estimate
            rows.append(row)
    return rows


def prediction_json(pred: RegimePrediction) -> str:
    return json.dumps(asdict(pred), sort_keys=True)
