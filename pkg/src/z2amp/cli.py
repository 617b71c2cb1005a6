"""Command-line front end.

Subcommands:
    simulate  -- Monte Carlo runs of the iteration at one (n, lambda)
    sweep     -- grid of (n, lambda) cells, one summary row per cell
    se        -- tabulate lambda -> fixed point and limiting risk
    diagnose  -- Gaussianity / orthonormality report for a single run

Configuration comes from an optional flat key=value file plus flag
overrides; flags win.  Exit codes: 0 success, 2 configuration error,
3 memory limit, 4 I/O failure, 1 anything else; failures print
"error: <category>: <message>" on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .engine import InitSpec, run
from .harness import (ConfigError, ExperimentConfig, emit, emit_sweep,
                      parse_config_file, run_experiment, sweep)
from .model import MemoryLimitError, build_model
from .state_evolution import asymptotic_risk, fixed_point

PRESETS = {
    "desk": {"n": 2000, "lam": 1.2, "n_seeds": 20, "t_max": 150, "backend": "dense"},
    # gated behind an explicit flag because of runtime
    "full": {"n": 10000, "n_seeds": 20, "t_max": 150, "backend": "streamed"},
}
FULL_SCALE_LAMBDAS = (1.15, 1.2)


def _float_list(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--n", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--seeds", type=int, help="number of Monte Carlo runs")
    p.add_argument("--tmax", type=int)
    p.add_argument("--init", action="append", choices=["random", "spectral"],
                   help="init kind to include (repeatable)")
    p.add_argument("--backend", choices=["dense", "streamed"])
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", type=Path)
    p.add_argument("--store-iterates", action="store_true", default=None)
    p.add_argument("--format", dest="output_format", choices=["csv", "json"])
    p.add_argument("--workers", type=int)
    p.add_argument("--risk-alpha", choices=["plugin", "oracle"])
    p.add_argument("--no-risk", action="store_true")


def _build_config(args, preset: dict | None = None) -> tuple[ExperimentConfig, Path]:
    overrides: dict = dict(preset or {})
    out = Path("z2amp-out")
    if args.config is not None:
        file_overrides = parse_config_file(args.config)
        out = Path(file_overrides.pop("out", out))
        overrides.update(file_overrides)
    flag_map = {
        "n": args.n, "lam": args.lam, "n_seeds": args.seeds, "t_max": args.tmax,
        "backend": args.backend, "base_seed": args.seed,
        "store_iterates": args.store_iterates, "output_format": args.output_format,
        "workers": args.workers, "risk_alpha": getattr(args, "risk_alpha", None),
    }
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    if args.init:
        overrides["inits"] = tuple(dict.fromkeys(args.init))
    if getattr(args, "no_risk", False):
        overrides["compute_risk"] = False
    if args.out is not None:
        out = args.out
    try:
        config = ExperimentConfig(**overrides).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config, out


def _cmd_simulate(args) -> int:
    preset = PRESETS.get(args.preset) if args.preset else None
    config, out = _build_config(args, preset)
    lams = [config.lam]
    if args.preset == "full" and args.lam is None:
        lams = list(FULL_SCALE_LAMBDAS)
    for lam in lams:
        cfg = dataclasses.replace(config, lam=lam).validate()
        dest = out if len(lams) == 1 else out / f"lambda_{lam}"
        result = run_experiment(cfg)
        for path in emit(result, cfg.output_format, dest):
            print(path)
    return 0


def _cmd_sweep(args) -> int:
    config, out = _build_config(args)
    if args.crossing_only:
        config = dataclasses.replace(
            config, stop_after_crossing=args.stop_margin, compute_risk=False)
    rows = sweep(args.n_grid, args.lambda_grid, config)
    for path in emit_sweep(rows, config.output_format, out):
        print(path)
    return 0


def _cmd_se(args) -> int:
    if args.lambdas is not None:
        lams = args.lambdas
    else:
        if args.lmax < args.lmin or args.step <= 0:
            raise ConfigError("need lmin <= lmax and step > 0")
        lams = list(np.arange(args.lmin, args.lmax + 1e-12, args.step))
    lines = ["lambda,alpha_star,asymptotic_risk"]
    for lam in lams:
        lines.append(f"{repr(float(lam))},{repr(fixed_point(lam))},{repr(asymptotic_risk(lam))}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_diagnose(args) -> int:
    model = build_model(args.n, args.lam, args.seed, backend=args.backend)
    spec = InitSpec(kind=args.init, init_seed=args.seed + (1 << 32))
    traj = run(model, spec, args.tmax, store_vectors="all")
    stats = metrics.gaussianity_diagnostic(traj, model)
    gram = metrics.orthonormality_diagnostic(traj.etas(), window=args.window)
    crossing = metrics.crossing_time(traj.alphas(), args.lam) if args.lam > 1 else None
    report = {
        "n": args.n, "lambda": args.lam, "seed": args.seed, "init": args.init,
        "crossing_time": crossing,
        "gram_window": min(args.window, len(traj.records)),
        "gram_eigenvalues": [float(v) for v in gram],
        "per_iteration": [
            {"t": s.t, "residual_norm": s.residual_norm,
             "excess_kurtosis": s.excess_kurtosis, "scaled_max": s.scaled_max}
            for s in stats
        ],
    }
    text = json.dumps(report, indent=1) + "\n"
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="z2amp",
                                     description="Rank-one synchronization via "
                                                 "iterative denoising: simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo experiment at one (n, lambda)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    _add_config_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="grid over n and lambda")
    p.add_argument("--n-grid", type=_int_list, required=True)
    p.add_argument("--lambda-grid", type=_float_list, required=True)
    p.add_argument("--crossing-only", action="store_true",
                   help="truncate runs shortly after crossing; summary keeps "
                        "only crossing statistics")
    p.add_argument("--stop-margin", type=int, default=5,
                   help="extra iterations to run past the crossing in "
                        "--crossing-only mode")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("se", help="tabulate lambda -> fixed point, limiting risk")
    p.add_argument("--lambdas", type=_float_list)
    p.add_argument("--lmin", type=float, default=1.05)
    p.add_argument("--lmax", type=float, default=1.5)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_se)

    p = sub.add_parser("diagnose", help="per-run Gaussianity / orthonormality report")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--lambda", dest="lam", type=float, default=1.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["random", "spectral"], default="random")
    p.add_argument("--tmax", type=int, default=50)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--backend", choices=["dense", "streamed"], default="dense")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except MemoryLimitError as exc:
        print(f"error: memory: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
