"""Monte Carlo orchestration: seed sweeps, aggregation, CSV/JSON emission.

A single experiment runs ``n_seeds`` independent model draws, each shared
across the requested initialization kinds (paired comparison), collects the
full per-iteration scalars, and aggregates the correlation curves into mean
and standard-deviation bands.  Outputs are deterministic byte-for-byte in
the configuration, whatever the worker count.

Trajectory CSV schema, one row per (init_kind, run, t):

    init_kind,run,t,alpha_oracle,alpha_plugin,correlation,pi,gamma,onsager,
    se_alpha,empirical_risk

se_alpha is the asymptotic-recursion value seeded at the measured crossing
time of that run (blank before it); empirical_risk is filled only on the
row where it was computed.  The aggregate CSV has one row per (init_kind, t)
with mean_corr and sd_corr (sample standard deviation over seeds).
"""

from __future__ import annotations

import json
import multiprocessing
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics, state_evolution
from .engine import AmpTrajectory, InitSpec, run
from .metrics import RiskReport
from .model import build_model

__all__ = [
    "AggregateCurve",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RunResult",
    "SweepRow",
    "emit",
    "parse_config_file",
    "run_experiment",
    "sweep",
]

SCHEMA_VERSION = 1

TRAJECTORY_COLUMNS = (
    "init_kind", "run", "t", "alpha_oracle", "alpha_plugin", "correlation",
    "pi", "gamma", "onsager", "se_alpha", "empirical_risk",
)
AGGREGATE_COLUMNS = ("init_kind", "t", "mean_corr", "sd_corr")
SWEEP_COLUMNS = ("n", "lambda", "init_kind", "n_runs", "finite_fraction",
                 "median_crossing", "plateau_correlation",
                 "mean_empirical_risk", "predicted_risk")

# model seeds are base_seed + run; init seeds live in a disjoint stream
INIT_SEED_OFFSET = 1 << 32


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 2000
    lam: float = 1.2
    n_seeds: int = 20
    t_max: int = 150
    inits: tuple[str, ...] = ("random", "spectral")
    backend: str = "dense"
    base_seed: int = 0
    power_iters: int = 100
    store_iterates: bool = False
    compute_risk: bool = True
    risk_alpha: str = "plugin"
    stop_after_crossing: int | None = None
    plateau_window: int = 20
    workers: int = 1
    output_format: str = "csv"

    def validate(self) -> "ExperimentConfig":
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.lam <= 0.0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.n_seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.n_seeds}")
        if self.t_max < 1:
            raise ConfigError(f"tmax must be >= 1, got {self.t_max}")
        if not self.inits:
            raise ConfigError("at least one init kind is required")
        for kind in self.inits:
            if kind not in ("random", "spectral"):
                raise ConfigError(f"unknown init kind {kind!r}")
        if self.backend not in ("dense", "streamed"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.risk_alpha not in ("plugin", "oracle"):
            raise ConfigError(f"risk_alpha must be plugin or oracle, got {self.risk_alpha!r}")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.output_format!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        return self

    def model_seed(self, run_index: int) -> int:
        return self.base_seed + run_index

    def init_seed(self, run_index: int) -> int:
        return self.base_seed + INIT_SEED_OFFSET + run_index


@dataclass
class RunResult:
    init_kind: str
    run: int
    model_seed: int
    init_seed: int
    trajectory: AmpTrajectory
    crossing: int | None
    se_alphas: list[float | None]
    plateau_correlation: float
    risk: RiskReport | None


@dataclass
class AggregateCurve:
    """Per-iteration mean and sample standard deviation over seeds."""

    init_kind: str
    ts: np.ndarray
    mean_correlation: np.ndarray
    sd_correlation: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    curves: dict[str, AggregateCurve]


def _se_column(alphas: np.ndarray, lam: float, crossing: int | None,
               n_records: int) -> list[float | None]:
    """Recursion values aligned to records: entry i holds alpha*_{i+2} or None."""
    col: list[float | None] = [None] * n_records
    if crossing is None or lam <= 1.0:
        return col
    last_t = n_records + 1
    trace = state_evolution.se_recursion(lam, abs(alphas[crossing - 2]), last_t - crossing)
    se = trace.alphas
    for t in range(crossing, last_t + 1):
        k = t - crossing
        col[t - 2] = float(se[k]) if k < se.size else float(se[-1])
    return col


def _single_run(config: ExperimentConfig, run_index: int) -> list[RunResult]:
    """All init kinds for one run index, sharing one model draw."""
    model = build_model(config.n, config.lam, config.model_seed(run_index),
                        backend=config.backend)
    if config.store_iterates:
        store = "all"
    elif config.compute_risk:
        store = "last"
    else:
        store = "none"
    out = []
    for kind in config.inits:
        spec = InitSpec(kind=kind, init_seed=config.init_seed(run_index),
                        power_iters=config.power_iters)
        traj = run(model, spec, config.t_max, store_vectors=store,
                   stop_after_crossing=config.stop_after_crossing)
        alphas = traj.alphas()
        crossing = (metrics.crossing_time(alphas, config.lam)
                    if config.lam > 1.0 else None)
        corr = traj.correlations()
        window = min(config.plateau_window, corr.size)
        risk = None
        if config.compute_risk:
            final = traj.records[-1]
            alpha = None
            if config.risk_alpha == "oracle":
                i = len(traj.records) - 1
                alpha = float(alphas[i - 1]) if i >= 1 else 0.0
            risk = metrics.risk_report(final, model, alpha=alpha)
            if not config.store_iterates:
                # drop the final vectors once the risk is computed
                traj.records[-1] = replace(final, x=None, eta=None)
        out.append(RunResult(
            init_kind=kind,
            run=run_index,
            model_seed=config.model_seed(run_index),
            init_seed=config.init_seed(run_index),
            trajectory=traj,
            crossing=crossing,
            se_alphas=_se_column(alphas, config.lam, crossing, len(traj.records)),
            plateau_correlation=float(np.mean(corr[-window:])),
            risk=risk,
        ))
    return out


def _aggregate(runs: list[RunResult], kind: str) -> AggregateCurve:
    series = [r.trajectory.correlations() for r in runs if r.init_kind == kind]
    length = min(s.size for s in series)
    mat = np.stack([s[:length] for s in series])
    mean = mat.mean(axis=0)
    if mat.shape[0] > 1:
        sd = mat.std(axis=0, ddof=1)
    else:
        sd = np.zeros(length)
    return AggregateCurve(init_kind=kind, ts=np.arange(1, length + 1),
                          mean_correlation=mean, sd_correlation=sd)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """n_seeds paired model draws per init kind, plus aggregate curves.

    Deterministic in the configuration: run r uses model seed base_seed + r
    and an init seed from a disjoint stream, and aggregation always walks
    runs in index order, so the worker count cannot change the output.
    """
    config.validate()
    indices = range(config.n_seeds)
    if config.workers > 1:
        # spawn: forking is unsafe once the compiled kernels' thread pool exists
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=config.workers, mp_context=ctx) as pool:
            per_run = list(pool.map(_single_run, [config] * config.n_seeds, indices))
    else:
        per_run = [_single_run(config, r) for r in indices]
    runs = [res for group in per_run for res in group]
    curves = {kind: _aggregate(runs, kind) for kind in config.inits}
    return ExperimentResult(config=config, runs=runs, curves=curves)


@dataclass(frozen=True)
class SweepRow:
    n: int
    lam: float
    init_kind: str
    n_runs: int
    finite_fraction: float
    median_crossing: float | None
    plateau_correlation: float | None
    mean_empirical_risk: float | None
    predicted_risk: float | None


def sweep(n_values: list[int], lam_values: list[float],
          config: ExperimentConfig) -> list[SweepRow]:
    """One summary row per (n, lambda, init kind) over the grid.

    The config is the per-cell template (seeds, horizon, init kinds...).
    With stop_after_crossing set, runs truncate shortly after crossing, so
    plateau and risk columns are suppressed (crossing-only mode).
    """
    if not n_values or not lam_values:
        raise ConfigError("sweep grid must be nonempty")
    crossing_only = config.stop_after_crossing is not None
    rows = []
    for n in n_values:
        for lam in lam_values:
            cell = replace(config, n=n, lam=lam,
                           compute_risk=config.compute_risk and not crossing_only)
            result = run_experiment(cell)
            for kind in cell.inits:
                rows.append(_summarize_cell(result, kind, crossing_only))
    return rows


def _summarize_cell(result: ExperimentResult, kind: str,
                    crossing_only: bool) -> SweepRow:
    runs = [r for r in result.runs if r.init_kind == kind]
    crossings = [r.crossing for r in runs if r.crossing is not None]
    finite_fraction = len(crossings) / len(runs)
    median_crossing = float(statistics.median(crossings)) if crossings else None
    plateau = None
    mean_risk = None
    predicted = None
    if not crossing_only:
        plateau = float(np.mean([r.plateau_correlation for r in runs]))
        risks = [r.risk.empirical_risk for r in runs if r.risk is not None]
        if risks:
            mean_risk = float(np.mean(risks))
            predicted = runs[0].risk.predicted_risk
    return SweepRow(n=result.config.n, lam=result.config.lam, init_kind=kind,
                    n_runs=len(runs), finite_fraction=finite_fraction,
                    median_crossing=median_crossing,
                    plateau_correlation=plateau,
                    mean_empirical_risk=mean_risk,
                    predicted_risk=predicted)


# ---------------------------------------------------------------------------
# emission

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _trajectory_rows(result: ExperimentResult):
    for res in result.runs:
        risk_t = res.risk.t if res.risk is not None else None
        for i, rec in enumerate(res.trajectory.records):
            risk = res.risk.empirical_risk if risk_t == rec.t else None
            yield (res.init_kind, res.run, rec.t, rec.alpha_oracle,
                   rec.alpha_plugin, rec.correlation, rec.pi, rec.gamma,
                   rec.onsager, res.se_alphas[i], risk)


def _aggregate_rows(result: ExperimentResult):
    for kind in result.config.inits:
        curve = result.curves[kind]
        for i, t in enumerate(curve.ts):
            yield (kind, int(t), float(curve.mean_correlation[i]),
                   float(curve.sd_correlation[i]))


def _write_csv(path: Path, header: tuple[str, ...], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def emit(result: ExperimentResult, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write trajectory and aggregate tables; returns the created paths."""
    if not result.runs:
        raise ValueError("refusing to emit empty results")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        traj = out_dir / "trajectories.csv"
        agg = out_dir / "aggregates.csv"
        _write_csv(traj, TRAJECTORY_COLUMNS, _trajectory_rows(result))
        _write_csv(agg, AGGREGATE_COLUMNS, _aggregate_rows(result))
        return [traj, agg]
    payload = {
        "schema_version": SCHEMA_VERSION,
        "trajectories": [dict(zip(TRAJECTORY_COLUMNS, row))
                         for row in _trajectory_rows(result)],
        "aggregates": [dict(zip(AGGREGATE_COLUMNS, row))
                       for row in _aggregate_rows(result)],
    }
    path = out_dir / "results.json"
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    return [path]


def emit_sweep(rows: list[SweepRow], fmt: str, out_dir: str | Path) -> list[Path]:
    """Write the sweep summary table."""
    if not rows:
        raise ValueError("refusing to emit empty results")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = [(r.n, r.lam, r.init_kind, r.n_runs, r.finite_fraction,
             r.median_crossing, r.plateau_correlation, r.mean_empirical_risk,
             r.predicted_risk) for r in rows]
    if fmt == "csv":
        path = out_dir / "sweep.csv"
        _write_csv(path, SWEEP_COLUMNS, data)
        return [path]
    path = out_dir / "sweep.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "rows": [dict(zip(SWEEP_COLUMNS, row)) for row in data],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    return [path]


def read_aggregates(path: str | Path) -> list[tuple[str, int, float, float]]:
    """Parse an aggregate CSV back into typed rows (round-trip helper)."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != AGGREGATE_COLUMNS:
            raise ValueError(f"unexpected aggregate header {header}")
        for line in fh:
            kind, t, mean, sd = line.rstrip("\n").split(",")
            rows.append((kind, int(t), float(mean), float(sd)))
    return rows


# ---------------------------------------------------------------------------
# config files: flat key=value lines, '#' comments

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

_KEYMAP = {
    "n": ("n", int),
    "lambda": ("lam", float),
    "seeds": ("n_seeds", int),
    "tmax": ("t_max", int),
    "backend": ("backend", str),
    "seed": ("base_seed", int),
    "store_iterates": ("store_iterates", None),
    "format": ("output_format", str),
    "workers": ("workers", int),
    "power_iters": ("power_iters", int),
    "risk_alpha": ("risk_alpha", str),
}


def parse_config_file(path: str | Path) -> dict:
    """Read key=value overrides for ExperimentConfig fields."""
    overrides: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "init":
                kinds = tuple(s.strip() for s in value.split(",") if s.strip())
                overrides["inits"] = kinds
            elif key == "out":
                overrides["out"] = value
            elif key in _KEYMAP:
                name, caster = _KEYMAP[key]
                if caster is None:
                    if value.lower() not in _BOOL:
                        raise ConfigError(f"{path}:{lineno}: bad boolean {value!r}")
                    overrides[name] = _BOOL[value.lower()]
                else:
                    try:
                        overrides[name] = caster(value)
                    except ValueError as exc:
                        raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return overrides
