"""Command-line experiment runner: simulate, analyze, theory, validate, sweep."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_suite
from .core import TIED, UrnParams, UrnState, simulate_batch, trusted_limit
from .embedding import embedded_batch
from .observables import (
    conditional_duration_tails,
    duration_tail,
    fit_slope,
    intensity_tail,
    log_grid,
    unit_grid,
    write_curves_csv,
)
from .theory import duration_asymptote, k_constant, predict_regime, regime_report

EXIT_OK, EXIT_INVALID, EXIT_CHECKS_FAILED = 0, 1, 2
PRESETS = {"desk": {"n_runs": 10_000, "horizon": 1_000_000},
           "paper": {"n_runs": 100_000, "horizon": 10_000_000}}
CHUNK = 4096
SAMPLERS = {"direct": simulate_batch, "embedded": embedded_batch}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    params: UrnParams
    horizon: int
    n_runs: int
    master_seed: int = 0
    grids: dict = field(default_factory=dict)
    fit_windows: dict = field(default_factory=dict)
    fit_scales: dict = field(default_factory=lambda: {"duration": "log-log", "intensity": "semi-log"})
    outputs: str = "out"
    sampler: str = "direct"
    workers: int = 1

    def simulation_key(self) -> dict:
        """Fields that determine the raw records; the config hash covers exactly these."""
        return {"beta": self.params.beta, "r": self.params.r, "x0": list(self.params.x0),
                "horizon": self.horizon, "n_runs": self.n_runs, "master_seed": self.master_seed,
                "sampler": self.sampler}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.simulation_key(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def grid(self, metric, values=None):
        grid_spec = self.grids.get(metric)
        if isinstance(grid_spec, list):
            return np.asarray(grid_spec, dtype=np.int64)
        grid_spec = grid_spec or {}
        if metric == "duration":
            return log_grid(int(grid_spec.get("lo", 1)), int(grid_spec.get("hi", max(self.horizon, 1))),
                            int(grid_spec.get("per_decade", 20)))
        hi = grid_spec.get("hi")
        if hi is None:
            hi = int(values.max()) + 1 if values is not None and len(values) else 1
        return unit_grid(int(grid_spec.get("lo", 1)), int(hi))

    def to_json(self) -> dict:
        d = asdict(self)
        d["params"] = {"beta": self.params.beta, "r": self.params.r, "x0": list(self.params.x0)}
        return d


# --- config parsing with line-precise errors -------------------------------


def _line_of(text: str, path) -> int:
    """Line of the last key in ``path`` within ``text``, searching nested keys in order."""
    pos = 0
    for key in path:
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _fail(source, text, path, msg):
    where = f"{source}:{_line_of(text, path)}" if text is not None else source
    raise ConfigError(f"{where}: {'.'.join(map(str, path))}: {msg}")


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(text) if text is not None else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be an object")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    preset = overrides.pop("preset", None) or raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            _fail(source, text, ["preset"], f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        for k, v in PRESETS[preset].items():
            raw.setdefault(k, v)
    raw.update(overrides)

    p = raw.get("params")
    if not isinstance(p, dict):
        _fail(source, text, ["params"], "missing or not an object with beta, r, x0")
    try:
        if "f1" in p or "f2" in p:
            params = UrnParams.from_fitness(p.get("beta"), p.get("f1"), p.get("f2"), tuple(p.get("x0", (1, 1))))
        else:
            params = UrnParams(p.get("beta"), p.get("r", 1.0), tuple(p.get("x0", (1, 1))))
    except (TypeError, ValueError) as exc:
        _fail(source, text, ["params"], str(exc))

    def integer(name, lo):
        v = raw.get(name)
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(source, text, [name], f"must be an integer, got {v!r}")
        if v < lo:
            _fail(source, text, [name], f"must be >= {lo}, got {v}")
        return v

    horizon = integer("horizon", 1)
    n_runs = integer("n_runs", 1)
    seed = integer("master_seed", 0) if "master_seed" in raw else 0
    workers = integer("workers", 1) if "workers" in raw else 1
    sampler = raw.get("sampler", "direct")
    if sampler not in SAMPLERS:
        _fail(source, text, ["sampler"], f"must be one of {sorted(SAMPLERS)}")

    windows = raw.get("fit_windows", {}) or {}
    limit = trusted_limit(horizon)
    for metric, w in windows.items():
        if metric not in ("duration", "intensity"):
            _fail(source, text, ["fit_windows", metric], "unknown metric")
        if not (isinstance(w, list) and len(w) == 2 and w[0] < w[1]):
            _fail(source, text, ["fit_windows", metric], f"must be [lo, hi] with lo < hi, got {w!r}")
        if w[1] > limit:
            _fail(source, text, ["fit_windows", metric],
                  f"window {w} exceeds the trusted range horizon/100 = {limit:g}")
    scales = {"duration": "log-log", "intensity": "semi-log"}
    scales.update(raw.get("fit_scales", {}) or {})
    for metric, s in scales.items():
        if s not in ("log-log", "semi-log"):
            _fail(source, text, ["fit_scales", metric], f"unknown scale {s!r}")
    grids = raw.get("grids", {}) or {}
    for metric, g in grids.items():
        if isinstance(g, list) and any(v > horizon for v in g) and metric == "duration":
            _fail(source, text, ["grids", metric], "grid extends past the horizon")
    return ExperimentConfig(params, horizon, n_runs, seed, grids, windows, scales,
                            str(raw.get("outputs", "out")), sampler, workers)


def load_config(path, overrides=None) -> ExperimentConfig:
    if path is None:
        return parse_config("{}", "<flags>", overrides)
    text = Path(path).read_text()
    return parse_config(text, str(path), overrides)


# --- records ---------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """One run as stored in the JSONL file; attribute names match :class:`TieSummary`."""

    run: int
    seed: int
    last_tie: int | None
    censored: bool
    intensity_observed: int
    final_state: UrnState
    leader: int
    horizon: int
    params: UrnParams

    def to_json(self, config_hash) -> str:
        return json.dumps({
            "run": self.run, "seed": self.seed, "duration_observed": self.last_tie,
            "censored": self.censored, "intensity": self.intensity_observed,
            "final_x1": self.final_state.x1, "final_x2": self.final_state.x2,
            "leader": "tied" if self.leader == TIED else self.leader,
            "config_hash": config_hash,
        })

    @classmethod
    def from_summary(cls, run, s):
        return cls(run, s.seed, s.last_tie, s.censored, s.intensity_observed, s.final_state,
                   s.leader, s.horizon, s.params)


def read_records(path, config: ExperimentConfig) -> list[RunRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            if d.get("config_hash") != config.config_hash:
                raise ConfigError(
                    f"{path}:{lineno}: record config hash {d.get('config_hash')} does not match "
                    f"config hash {config.config_hash}")
            leader = TIED if d["leader"] == "tied" else int(d["leader"])
            out.append(RunRecord(
                d["run"], d["seed"], d["duration_observed"], d["censored"], d["intensity"],
                UrnState(d["final_x1"], d["final_x2"], config.horizon), leader,
                config.horizon, config.params))
    if not out:
        raise ConfigError(f"{path}: no records")
    return out


def cmd_simulate(config: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sampler = SAMPLERS[config.sampler]
    path = out / "records.jsonl"
    with open(path, "w") as fh:
        for start in range(0, config.n_runs, CHUNK):
            n = min(CHUNK, config.n_runs - start)
            batch = sampler(config.params, config.horizon, n, config.master_seed,
                            workers=config.workers, first_run=start)
            for i, s in enumerate(batch):
                fh.write(RunRecord.from_summary(start + i, s).to_json(config.config_hash) + "\n")
    meta = {"config_hash": config.config_hash, "version": __version__,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "config": config.to_json()}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _fit_rows(curve, window, scale, label, config_hash):
    try:
        fit = fit_slope(curve, window, scale)
        return {"curve": label, "scale": scale, "slope": fit.slope, "intercept": fit.intercept,
                "window_lo": fit.window[0], "window_hi": fit.window[1], "n_points": fit.n_points,
                "residual_rms": fit.residual_rms, "status": "ok", "config_hash": config_hash}
    except ValueError as exc:
        return {"curve": label, "scale": scale, "slope": "", "intercept": "", "window_lo": "",
                "window_hi": "", "n_points": "", "residual_rms": "", "status": str(exc),
                "config_hash": config_hash}


def cmd_analyze(records_path, config: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    meta_path = Path(records_path).parent / "meta.json"
    if meta_path.exists():
        meta_hash = json.loads(meta_path.read_text()).get("config_hash")
        if meta_hash != config.config_hash:
            raise ConfigError(f"{meta_path}: config hash {meta_hash} does not match {config.config_hash}")
    records = read_records(records_path, config)
    out.mkdir(parents=True, exist_ok=True)
    h = config.config_hash
    dur = duration_tail(records, config.grid("duration"))
    intens = intensity_tail(records, config.grid("intensity", np.array([r.intensity_observed for r in records])))
    write_curves_csv([dur, intens], out / "curves.csv", h)
    fits = [
        _fit_rows(dur, config.fit_windows.get("duration"), config.fit_scales["duration"], "duration", h),
        _fit_rows(intens, config.fit_windows.get("intensity"), config.fit_scales["intensity"], "intensity", h),
    ]
    if config.params.r > 1:
        lead1, lead2 = conditional_duration_tails(records, config.grid("duration"))
        for label, c in (("leader1", lead1), ("leader2", lead2)):
            write_curves_csv([c], out / f"duration_{label}.csv", h)
            for scale in ("log-log", "semi-log"):
                fits.append(_fit_rows(c, config.fit_windows.get("duration"), scale, f"duration_{label}", h))
    with open(out / "fits.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fits[0]))
        w.writeheader()
        w.writerows(fits)
    return {"curves": str(out / "curves.csv"), "fits": fits}


def cmd_theory(beta, r, x0, tol, times=(100, 1000, 10000)) -> tuple[dict, int]:
    pred = predict_regime(beta, r, x0)
    report = {"regime": asdict(pred)}
    if pred.duration_tail.family == "always-infinite":
        report["summary"] = "never ends: P[T >= t] = 1 and P[N >= n] = 1"
    code = EXIT_OK
    if beta > 1 or (beta > 0.5 and r == 1):
        try:
            k = k_constant(beta, r, x0, tol)
            report["K"] = {"value": k.value, "abs_error_estimate": k.abs_error_estimate,
                           "product_truncation": k.product_truncation,
                           "integral_truncation": k.integral_truncation,
                           "imag_residue": k.imag_residue}
            if (r == 1 and beta > 0.5) or (r > 1 and beta > 1):
                report["duration_asymptote"] = {
                    str(t): float(duration_asymptote(beta, r, x0, t, k=k.value)) for t in times}
        except ArithmeticError as exc:
            report["K"] = {"error": str(exc)}
            code = EXIT_INVALID
    return report, code


def _write_rows(rows, path):
    fields = sorted({k for r in rows for k in r}, key=lambda k: list(rows[0]).index(k) if k in rows[0] else 99)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def cmd_sweep(betas, rs, x0, tol, out_dir, config=None) -> list[dict]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = regime_report(betas, rs, x0, tol)
    _write_rows(rows, out / "regime_report.csv")
    (out / "regime_report.json").write_text(json.dumps(rows, indent=2) + "\n")
    if config is not None:
        for beta in betas:
            for r in rs:
                cell = ExperimentConfig(UrnParams(beta, r, x0), config.horizon, config.n_runs,
                                        config.master_seed, config.grids, config.fit_windows,
                                        config.fit_scales, config.outputs, config.sampler, config.workers)
                sub = out / f"beta={beta:g}_r={r:g}"
                records = cmd_simulate(cell, sub)
                cmd_analyze(records, cell, sub)
    return rows


# --- argument handling ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _pair(text):
    vals = [int(v) for v in text.split(",")]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated integers")
    return tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="polyurn", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_flags(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output directory (default: config 'outputs')")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--runs", type=int, help="number of runs")
        p.add_argument("--horizon", type=int, help="steps per run")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--beta", type=float)
        p.add_argument("--r", type=float)
        p.add_argument("--x0", type=_pair)
        p.add_argument("--workers", type=int)

    experiment_flags(sub.add_parser("simulate", help="run a batch and write JSONL records"))
    an = sub.add_parser("analyze", help="tail curves and slope fits from records")
    experiment_flags(an)
    an.add_argument("--records", help="records file (default: OUT/records.jsonl)")

    th = sub.add_parser("theory", help="regime, K and asymptotes for one parameter set")
    th.add_argument("--beta", type=float, required=True)
    th.add_argument("--r", type=float, default=1.0)
    th.add_argument("--x0", type=_pair, default=(1, 1))
    th.add_argument("--tol", type=float, default=1e-6)
    th.add_argument("--out", help="write the report JSON here as well")

    va = sub.add_parser("validate", help="run a check suite")
    va.add_argument("suite", help="oracle, embedding, dominance, bounds or all")
    va.add_argument("--scale", type=float, default=1.0, help="multiplier on run counts")
    va.add_argument("--out", help="write the JSON report here as well")

    sw = sub.add_parser("sweep", help="regime report over a (beta, r) grid, optionally with batches")
    experiment_flags(sw)
    sw.add_argument("--betas", type=_floats, required=True)
    sw.add_argument("--rs", type=_floats, default=[1.0])
    sw.add_argument("--tol", type=float, help="also compute K at this tolerance")
    sw.add_argument("--simulate", action="store_true", help="run simulate+analyze in every cell")
    return ap


def _experiment(args) -> ExperimentConfig:
    overrides = {"horizon": args.horizon, "n_runs": args.runs, "master_seed": args.seed,
                 "preset": args.preset, "workers": args.workers}
    text = Path(args.config).read_text() if args.config else None
    source = args.config or "<flags>"
    try:
        raw = json.loads(text) if text else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if any(v is not None for v in (args.beta, args.r, args.x0)) and isinstance(raw, dict):
        p = dict(raw.get("params") or {})
        for key, v in (("beta", args.beta), ("r", args.r), ("x0", list(args.x0) if args.x0 else None)):
            if v is not None:
                p[key] = v
        overrides["params"] = p
    return parse_config(text if text is not None else "{}", source, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _experiment(args)
            path = cmd_simulate(cfg, args.out or cfg.outputs)
            print(json.dumps({"records": str(path), "config_hash": cfg.config_hash, "n_runs": cfg.n_runs}))
        elif args.command == "analyze":
            cfg = _experiment(args)
            out = args.out or cfg.outputs
            result = cmd_analyze(args.records or Path(out) / "records.jsonl", cfg, out)
            print(json.dumps(result, indent=2))
        elif args.command == "theory":
            report, code = cmd_theory(args.beta, args.r, args.x0, args.tol)
            text = json.dumps(report, indent=2, default=str)
            print(text)
            if args.out:
                Path(args.out).write_text(text + "\n")
            return code
        elif args.command == "validate":
            try:
                results = run_suite(args.suite, args.scale)
            except KeyError as exc:
                print(f"polyurn validate: {exc.args[0]}", file=sys.stderr)
                return EXIT_INVALID
            payload = [r.to_dict() for r in results]
            for r in payload:
                print(json.dumps(r, default=float))
            if args.out:
                Path(args.out).write_text(json.dumps(payload, indent=2, default=float) + "\n")
            return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS_FAILED
        elif args.command == "sweep":
            if args.simulate and args.beta is None:
                # each cell overrides beta and r; this only satisfies config validation
                args.beta = args.betas[0]
            cfg = _experiment(args) if args.simulate else None
            out = args.out or (cfg.outputs if cfg else "sweep")
            x0 = args.x0 or (cfg.params.x0 if cfg else (1, 1))
            rows = cmd_sweep(args.betas, args.rs, x0, args.tol, out, cfg)
            for row in rows:
                print(json.dumps(row, default=lambda v: None if isinstance(v, float) and math.isnan(v) else v))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"polyurn {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
