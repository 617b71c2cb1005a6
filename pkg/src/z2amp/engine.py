"""Iteration engine: random or spectral start, full trajectory recording.

The update is

    x_{t+1} = M eta_t(x_t) - <eta_t'(x_t)> eta_{t-1}(x_{t-1}),   t >= 1,

with eta_0(x_0) = 0 under both initializations, so the first step is a
plain matvec.  Random start draws x_1 ~ N(0, I/n) independently of the
model; spectral start runs power iterations on M and sets x_1 = lam * vhat.

Record t describes the denoised iterate eta_t(x_t).  Because the signal
overlap is defined from the denoised iterate, the alpha columns of record t
refer to alpha_{t+1} = lam * v^T eta_t(x_t); alpha_plugin is the oracle-free
estimate pi_{t+1}/sqrt(n) of its magnitude with a propagated sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import denoiser
from .model import SpikedModel

__all__ = [
    "AmpEngine",
    "AmpTrajectory",
    "InitSpec",
    "IterationRecord",
    "init",
    "run",
    "step",
]

INIT_KINDS = ("random", "spectral")
STORE_MODES = ("none", "last", "all")

POWER_ITERS_DEFAULT = 100
RAYLEIGH_TOL = 1e-10


@dataclass(frozen=True)
class InitSpec:
    """How to produce x_1.

    spectral_scale overrides the default x_1 = lam * vhat scaling of the
    spectral start (the convention is recorded here, not canonical).
    """

    kind: str
    init_seed: int
    power_iters: int = POWER_ITERS_DEFAULT
    spectral_scale: float | None = None

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown init kind {self.kind!r}, expected one of {INIT_KINDS}")
        if self.kind == "spectral" and self.power_iters < 1:
            raise ValueError(f"power_iters must be >= 1, got {self.power_iters}")


@dataclass(frozen=True)
class IterationRecord:
    """Scalars for iteration t; alpha_* columns refer to alpha_{t+1}."""

    t: int
    pi: float
    gamma: float
    onsager: float
    alpha_oracle: float
    alpha_plugin: float
    correlation: float
    eta_norm: float
    x: np.ndarray | None = None
    eta: np.ndarray | None = None


@dataclass
class AmpTrajectory:
    n: int
    lam: float
    init_kind: str
    records: list[IterationRecord] = field(default_factory=list)

    def alphas(self) -> np.ndarray:
        """Oracle overlaps; entry k is alpha_{k+2} (record k+1's alpha_oracle)."""
        return np.array([r.alpha_oracle for r in self.records])

    def plugin_alphas(self) -> np.ndarray:
        return np.array([r.alpha_plugin for r in self.records])

    def correlations(self) -> np.ndarray:
        return np.array([r.correlation for r in self.records])

    def etas(self) -> list[np.ndarray]:
        out = [r.eta for r in self.records if r.eta is not None]
        if len(out) != len(self.records):
            raise ValueError("denoised iterates were not stored for every record")
        return out


class AmpEngine:
    """Mutable per-run state; one engine instance per thread."""

    def __init__(self, model: SpikedModel, spec: InitSpec):
        self.model = model
        self.t = 1
        self.x = _initial_iterate(model, spec)
        self.prev_eta = np.zeros(model.n)
        self.orientation = 1.0

    def step(self) -> IterationRecord:
        """Denoise x_t, advance to x_{t+1}, and return the record for t."""
        model = self.model
        params = denoiser.compute_params(self.x)
        eta = denoiser.apply(params, self.x)
        overlap = float(model.signal @ eta)
        alpha_oracle = model.lam * overlap
        if float(eta @ self.prev_eta) < 0.0:
            self.orientation = -self.orientation
        x_next = model.matvec(eta) - params.mean_derivative * self.prev_eta
        pi_next = denoiser.iterate_scale(x_next)
        record = IterationRecord(
            t=self.t,
            pi=params.pi,
            gamma=params.gamma,
            onsager=params.mean_derivative,
            alpha_oracle=alpha_oracle,
            alpha_plugin=self.orientation * pi_next / math.sqrt(model.n),
            correlation=abs(alpha_oracle) / model.lam if model.lam > 0.0 else abs(overlap),
            eta_norm=float(np.linalg.norm(eta)),
            x=self.x,
            eta=eta,
        )
        self.prev_eta = eta
        self.x = x_next
        self.t += 1
        return record


def _initial_iterate(model: SpikedModel, spec: InitSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.init_seed)
    if spec.kind == "random":
        return rng.standard_normal(model.n) / math.sqrt(model.n)
    # spectral: power iteration from a random unit start, early stop once the
    # Rayleigh quotient settles
    b = rng.standard_normal(model.n)
    b /= np.linalg.norm(b)
    rayleigh = None
    for _ in range(spec.power_iters):
        mb = model.matvec(b)
        norm = float(np.linalg.norm(mb))
        if norm == 0.0:
            raise ValueError("power iteration hit the zero vector (zero matrix?)")
        b = mb / norm
        current = float(b @ model.matvec(b))
        if rayleigh is not None and abs(current - rayleigh) < RAYLEIGH_TOL:
            rayleigh = current
            break
        rayleigh = current
    scale = model.lam if spec.spectral_scale is None else spec.spectral_scale
    return scale * b


def init(model: SpikedModel, spec: InitSpec) -> AmpEngine:
    return AmpEngine(model, spec)


def step(engine: AmpEngine) -> IterationRecord:
    return engine.step()


def run(model: SpikedModel, spec: InitSpec, t_max: int,
        store_vectors: str = "none",
        stop_after_crossing: int | None = None) -> AmpTrajectory:
    """Run t_max iterations and collect one record per iteration.

    store_vectors: "none" keeps scalars only, "last" attaches (x, eta) to the
    final record, "all" attaches them to every record.  stop_after_crossing,
    if set and lam > 1, truncates the run that many iterations after the
    oracle overlap first reaches half the spectral-overlap level (used by
    crossing-time sweeps; the recorded prefix is unchanged).
    """
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    if store_vectors not in STORE_MODES:
        raise ValueError(f"unknown store_vectors {store_vectors!r}, expected one of {STORE_MODES}")
    threshold = None
    if stop_after_crossing is not None:
        if model.lam <= 1.0:
            raise ValueError("stop_after_crossing needs lam > 1")
        threshold = 0.5 * math.sqrt(model.lam ** 2 - 1.0)
    engine = AmpEngine(model, spec)
    records: list[IterationRecord] = []
    crossed_at = None
    last_full = None
    for t in range(1, t_max + 1):
        rec = engine.step()
        last_full = rec
        if store_vectors != "all":
            rec = replace(rec, x=None, eta=None)
        records.append(rec)
        if threshold is not None and crossed_at is None and abs(rec.alpha_oracle) >= threshold:
            crossed_at = t
        if crossed_at is not None and t >= crossed_at + stop_after_crossing:
            break
    if store_vectors == "last":
        records[-1] = last_full
    return AmpTrajectory(n=model.n, lam=model.lam, init_kind=spec.kind, records=records)
