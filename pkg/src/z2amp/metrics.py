"""Oracle-aware measurements on trajectories.

Signal strength, crossing time, the rank-one estimator and its Frobenius
risk, agreement between the measured overlap sequence and the asymptotic
recursion, and the Gaussianity / near-orthonormality diagnostics.

Indexing: record t of a trajectory stores alpha_{t+1} (the overlap of the
denoised iterate eta_t(x_t) with the truth), so the overlap arrays returned
by AmpTrajectory.alphas() start at alpha_2.  Functions below take a
``first_t`` anchor so crossing times are reported in iteration numbering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import kurtosis

from . import state_evolution
from .engine import AmpTrajectory, IterationRecord
from .model import SpikedModel

__all__ = [
    "GaussianityStats",
    "RiskEntry",
    "RiskReport",
    "SeAgreement",
    "alpha_oracle",
    "crossing_threshold",
    "crossing_time",
    "empirical_risk",
    "estimator_u",
    "gaussianity_diagnostic",
    "orthonormality_diagnostic",
    "risk_report",
    "se_agreement",
]


def alpha_oracle(trajectory: AmpTrajectory, model: SpikedModel | None = None) -> np.ndarray:
    """Overlap sequence lam * v^T eta_t(x_t); entry k is alpha_{k+2}.

    Recomputed from the stored denoised iterates when available and a model
    is given, otherwise read from the recorded scalars.
    """
    if model is not None and all(r.eta is not None for r in trajectory.records):
        return np.array([model.lam * float(model.signal @ r.eta)
                         for r in trajectory.records])
    return trajectory.alphas()


def crossing_threshold(lam: float) -> float:
    """Half the spectral overlap level, 0.5*sqrt(lam^2 - 1); needs lam > 1."""
    if lam <= 1.0:
        raise ValueError(f"crossing threshold needs lam > 1, got {lam}")
    return 0.5 * math.sqrt(lam * lam - 1.0)


def crossing_time(alpha_seq: np.ndarray, lam: float, first_t: int = 2) -> int | None:
    """First iteration t with |alpha_t| >= 0.5*sqrt(lam^2-1), None if never.

    alpha_seq[k] is read as alpha_{first_t + k}; the default anchor matches
    AmpTrajectory.alphas().  For truth-free operation pass the plug-in
    sequence (AmpTrajectory.plugin_alphas()) instead of the oracle one.
    """
    thr = crossing_threshold(lam)
    hits = np.nonzero(np.abs(np.asarray(alpha_seq)) >= thr)[0]
    if hits.size == 0:
        return None
    return first_t + int(hits[0])


def estimator_u(record: IterationRecord, lam: float, alpha: float | None = None) -> np.ndarray:
    """Rank-one estimator u_t = tanh(pi_t x_t) / (lam sqrt(n (alpha_t^2 + 1))).

    alpha defaults to the plug-in value pi_t/sqrt(n), which needs no access
    to the truth; pass the oracle alpha_t explicitly to use it instead.
    Requires the record to carry its iterate (vector storage enabled).
    """
    if record.x is None:
        raise ValueError(f"record t={record.t} does not store x; rerun with vector storage")
    n = record.x.size
    if alpha is None:
        alpha = record.pi / math.sqrt(n)
    return np.tanh(record.pi * record.x) / (lam * math.sqrt(n * (alpha * alpha + 1.0)))


@dataclass(frozen=True)
class RiskEntry:
    empirical_risk: float
    overlap: float
    u_norm4: float


def empirical_risk(u: np.ndarray, v_star: np.ndarray) -> RiskEntry:
    """||v v^T - u u^T||_F^2 = 1 - 2 (v^T u)^2 + ||u||^4 for unit v.

    Uses the rank-one expansion, so no n-by-n matrix is formed.
    """
    overlap = float(v_star @ u) ** 2
    u_norm4 = float(u @ u) ** 2
    return RiskEntry(empirical_risk=1.0 - 2.0 * overlap + u_norm4,
                     overlap=overlap, u_norm4=u_norm4)


@dataclass(frozen=True)
class RiskReport:
    t: int
    empirical_risk: float
    predicted_risk: float
    overlap: float
    u_norm4: float
    alpha_source: str


def risk_report(record: IterationRecord, model: SpikedModel,
                alpha: float | None = None) -> RiskReport:
    """Empirical risk of u_t against the asymptotic prediction 1 - a*^4/lam^4."""
    source = "plugin" if alpha is None else "oracle"
    u = estimator_u(record, model.lam, alpha=alpha)
    entry = empirical_risk(u, model.signal)
    return RiskReport(t=record.t,
                      empirical_risk=entry.empirical_risk,
                      predicted_risk=state_evolution.asymptotic_risk(model.lam),
                      overlap=entry.overlap,
                      u_norm4=entry.u_norm4,
                      alpha_source=source)


@dataclass(frozen=True)
class SeAgreement:
    """alpha_t^2 / alpha*_t^2 for t >= crossing, recursion seeded at |alpha_crossing|."""

    crossing: int | None
    ts: np.ndarray
    ratios: np.ndarray
    max_abs_log_ratio: float

    @property
    def crossed(self) -> bool:
        return self.crossing is not None


def se_agreement(alpha_seq: np.ndarray, lam: float, t_end: int | None = None,
                 first_t: int = 2) -> SeAgreement:
    """Compare measured overlaps to the recursion started at the crossing.

    Seeds alpha*_crossing = |alpha_crossing| at the measured crossing time,
    then tracks alpha_t^2 / alpha*_t^2 up to t_end (default: end of data).
    Returns an empty agreement when the sequence never crosses.
    """
    alpha_seq = np.asarray(alpha_seq, dtype=np.float64)
    cross = crossing_time(alpha_seq, lam, first_t=first_t)
    if cross is None:
        return SeAgreement(crossing=None, ts=np.array([], dtype=int),
                           ratios=np.array([]), max_abs_log_ratio=math.nan)
    last_t = first_t + alpha_seq.size - 1
    if t_end is not None:
        last_t = min(last_t, t_end)
    steps = last_t - cross
    trace = state_evolution.se_recursion(lam, abs(alpha_seq[cross - first_t]), steps)
    se = trace.alphas
    if se.size < steps + 1:  # early-stopped at the fixed point; pad with the limit
        se = np.concatenate([se, np.full(steps + 1 - se.size, se[-1])])
    ts = np.arange(cross, last_t + 1)
    measured = alpha_seq[ts - first_t]
    ratios = measured ** 2 / se ** 2
    return SeAgreement(crossing=cross, ts=ts, ratios=ratios,
                       max_abs_log_ratio=float(np.max(np.abs(np.log(ratios)))))


@dataclass(frozen=True)
class GaussianityStats:
    t: int
    alpha: float
    residual_norm: float
    excess_kurtosis: float
    scaled_max: float


def gaussianity_diagnostic(trajectory: AmpTrajectory,
                           model: SpikedModel) -> list[GaussianityStats]:
    """Moment diagnostics of r_t = x_t - alpha_t v for every stored iterate.

    The iterate decomposes as signal plus an approximately N(0, I/n) part,
    so sqrt(n) r_t should look standard normal: norm near 1, excess kurtosis
    near 0, max entry of order sqrt(log n / n).
    """
    n = model.n
    stats = []
    prev_alpha = 0.0  # alpha_1 = 0 under either start (eta_0 = 0)
    for rec in trajectory.records:
        if rec.x is not None:
            r = rec.x - prev_alpha * model.signal
            z = math.sqrt(n) * r
            stats.append(GaussianityStats(
                t=rec.t,
                alpha=prev_alpha,
                residual_norm=float(np.linalg.norm(r)),
                excess_kurtosis=float(kurtosis(z)),
                scaled_max=float(np.max(np.abs(r))) * math.sqrt(n / math.log(n)),
            ))
        prev_alpha = rec.alpha_oracle
    return stats


def orthonormality_diagnostic(etas: list[np.ndarray], window: int = 15) -> np.ndarray:
    """Eigenvalues of the Gram matrix of the first ``window`` denoised iterates."""
    if not etas:
        raise ValueError("need at least one denoised iterate")
    basis = np.stack(etas[:window], axis=1)
    gram = basis.T @ basis
    return np.linalg.eigvalsh(gram)
