"""Empirical tail curves of duration and intensity, and slope fits on them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

METRICS = ("duration", "intensity")
SCALES = ("log-log", "semi-log")
MIN_FIT_POINTS = 10


@dataclass(frozen=True, eq=False)
class TailCurve:
    """Estimates of ``P[metric >= grid[i]]``.

    ``counts[i]`` runs reached ``grid[i]``.  ``trusted`` marks grid points at
    most ``horizon / 100``, where horizon censoring is negligible.  An exact
    (noise-free) curve has ``n_samples = None`` and zero standard errors.
    """

    metric: str
    grid: np.ndarray
    ccdf: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray | None
    n_samples: int | None
    horizon: int | None
    censored_fraction: float
    trusted: np.ndarray

    @property
    def empty(self) -> bool:
        return self.n_samples == 0

    @property
    def noise_floor(self) -> float:
        return 0.0 if not self.n_samples else 10.0 / self.n_samples

    @classmethod
    def from_counts(cls, metric, grid, counts, n_samples, horizon, censored_fraction=0.0):
        grid = np.asarray(grid)
        counts = np.asarray(counts, dtype=np.int64)
        if n_samples:
            p = counts / n_samples
            se = np.sqrt(p * (1 - p) / n_samples)
        else:
            p = np.zeros(len(grid))
            se = np.zeros(len(grid))
        trusted = grid <= horizon / 100.0 if horizon is not None else np.ones(len(grid), bool)
        return cls(metric, grid, p, se, counts, n_samples, horizon, censored_fraction, trusted)

    @classmethod
    def exact(cls, grid, ccdf, metric="duration"):
        """Noise-free curve from known tail values (synthetic laws, exact oracles)."""
        grid = np.asarray(grid, dtype=np.float64)
        ccdf = np.asarray(ccdf, dtype=np.float64)
        return cls(
            metric, grid, ccdf, np.zeros_like(ccdf), None, None, None, 0.0, np.ones(len(grid), bool)
        )

    def rows(self, config_hash=None):
        for g, p, se, tr in zip(self.grid, self.ccdf, self.stderr, self.trusted):
            row = {"metric": self.metric, "grid": g.item(), "ccdf": repr(float(p)),
                   "stderr": repr(float(se)), "trusted": int(tr)}
            if config_hash is not None:
                row["config_hash"] = config_hash
            yield row


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    window: tuple[float, float]
    residual_rms: float
    scale: str
    n_points: int


def log_grid(lo: int, hi: int, per_decade: int = 20) -> np.ndarray:
    """Distinct integers spaced roughly evenly in ``log`` between ``lo`` and ``hi``."""
    if not 1 <= lo <= hi:
        raise ValueError(f"need 1 <= lo <= hi, got {lo}, {hi}")
    n = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.unique(np.round(np.geomspace(lo, hi, n)).astype(np.int64))


def unit_grid(lo: int, hi: int) -> np.ndarray:
    return np.arange(int(lo), int(hi) + 1, dtype=np.int64)


def _field(s, *names):
    for name in names:
        if hasattr(s, name):
            return getattr(s, name)
    raise AttributeError(f"record has none of {names}")


def _batch_facts(summaries):
    if len(summaries) == 0:
        raise ValueError("empty batch")
    horizons = {int(s.horizon) for s in summaries}
    if len(horizons) != 1:
        raise ValueError(f"summaries mix horizons {sorted(horizons)}")
    params = {s.params for s in summaries}
    if len(params) != 1:
        raise ValueError("summaries mix parameter sets")
    censored = float(np.mean([bool(s.censored) for s in summaries]))
    return horizons.pop(), censored


def metric_values(summaries, metric) -> np.ndarray:
    """Observed last tie (``-1`` without ties) or tie count of every run."""
    if metric == "duration":
        vals = (_field(s, "last_tie", "duration_observed") for s in summaries)
        return np.array([-1 if v is None else v for v in vals], dtype=np.int64)
    if metric == "intensity":
        return np.array([_field(s, "intensity_observed", "intensity") for s in summaries], dtype=np.int64)
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


def tail_from_values(values, grid, metric, horizon, censored_fraction=0.0) -> TailCurve:
    values = np.sort(np.asarray(values, dtype=np.int64))
    grid = np.asarray(grid)
    if len(grid) and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    counts = len(values) - np.searchsorted(values, grid, side="left")
    return TailCurve.from_counts(metric, grid, counts, len(values), horizon, censored_fraction)


def duration_tail(summaries, grid=None) -> TailCurve:
    """Fraction of runs whose last observed tie is at or after each grid time."""
    horizon, censored = _batch_facts(summaries)
    if grid is None:
        grid = log_grid(1, max(horizon, 1))
    grid = np.asarray(grid)
    if len(grid) and grid.max() > horizon:
        raise ValueError(f"grid extends past the horizon {horizon}")
    return tail_from_values(metric_values(summaries, "duration"), grid, "duration", horizon, censored)


def intensity_tail(summaries, grid=None) -> TailCurve:
    """Fraction of runs with at least ``n`` observed ties, for each grid count ``n``."""
    horizon, censored = _batch_facts(summaries)
    values = metric_values(summaries, "intensity")
    if grid is None:
        grid = unit_grid(1, values.max() + 1)
    return tail_from_values(values, grid, "intensity", horizon, censored)


def merge(curves) -> TailCurve:
    """Pool curves from disjoint sub-batches sharing grid, metric and horizon."""
    curves = list(curves)
    if not curves:
        raise ValueError("nothing to merge")
    first = curves[0]
    for c in curves[1:]:
        if c.metric != first.metric or c.horizon != first.horizon or not np.array_equal(c.grid, first.grid):
            raise ValueError("curves differ in metric, horizon or grid")
    if any(c.counts is None for c in curves):
        raise ValueError("exact curves carry no counts to merge")
    n = sum(c.n_samples for c in curves)
    counts = sum(c.counts for c in curves)
    cens = sum(c.censored_fraction * c.n_samples for c in curves) / n if n else 0.0
    return TailCurve.from_counts(first.metric, first.grid, counts, n, first.horizon, cens)


def usable_points(curve: TailCurve, window=None, scale="log-log") -> np.ndarray:
    """Mask of grid points inside ``window`` that are trusted and above the noise floor."""
    lo, hi = window if window is not None else (-np.inf, np.inf)
    mask = (curve.grid >= lo) & (curve.grid <= hi) & curve.trusted & (curve.ccdf > curve.noise_floor)
    mask &= curve.ccdf > 0
    if scale == "log-log":
        mask &= curve.grid > 0
    return mask


def fit_slope(curve: TailCurve, window=None, scale="log-log") -> SlopeFit:
    """Least-squares line through ``log ccdf`` against ``log grid`` or ``grid``."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    mask = usable_points(curve, window, scale)
    n = int(mask.sum())
    if n < MIN_FIT_POINTS:
        raise ValueError(f"only {n} usable points in window {window}; need {MIN_FIT_POINTS}")
    x = curve.grid[mask].astype(np.float64)
    if scale == "log-log":
        x = np.log(x)
    y = np.log(curve.ccdf[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    g = curve.grid[mask]
    return SlopeFit(float(slope), float(intercept), (g.min().item(), g.max().item()),
                    float(np.sqrt(np.mean(resid**2))), scale, n)


def conditional_duration_tails(summaries, grid=None) -> tuple[TailCurve, TailCurve]:
    """Duration curves of the runs led by color 1 and by color 2 at the horizon.

    Runs tied at the horizon belong to neither side.  A side without runs
    gives an ``empty`` curve.
    """
    horizon, _ = _batch_facts(summaries)
    if grid is None:
        grid = log_grid(1, max(horizon, 1))
    out = []
    for side in (1, 2):
        sub = [s for s in summaries if int(s.leader) == side]
        if sub:
            out.append(duration_tail(sub, grid))
        else:
            out.append(TailCurve.from_counts("duration", np.asarray(grid), np.zeros(len(grid)), 0, horizon))
    return out[0], out[1]


def write_curves_csv(curves, path, config_hash=None) -> None:
    fields = ["metric", "grid", "ccdf", "stderr", "trusted"]
    if config_hash is not None:
        fields.append("config_hash")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for c in curves:
            w.writerows(c.rows(config_hash))


def read_curves_csv(path) -> dict:
    """Curves keyed by metric, rebuilt from :func:`write_curves_csv` output (no counts)."""
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["metric"], []).append(row)
    out = {}
    for metric, rs in rows.items():
        grid = np.array([float(r["grid"]) for r in rs])
        out[metric] = TailCurve(
            metric, grid, np.array([float(r["ccdf"]) for r in rs]),
            np.array([float(r["stderr"]) for r in rs]), None, None, None, 0.0,
            np.array([r["trusted"] == "1" for r in rs]),
        )
    return out
