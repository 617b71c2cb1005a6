"""Rank-one synchronization on the spiked Wigner model via adaptive
tanh-denoised message passing, with the asymptotic state-evolution
predictor, risk evaluation, and a seeded Monte Carlo harness."""

from .denoiser import (DegenerateIterateError, DenoiserParams, apply,
                       apply_derivative, compute_params)
from .engine import AmpEngine, AmpTrajectory, InitSpec, IterationRecord, run
from .harness import (AggregateCurve, ConfigError, ExperimentConfig,
                      ExperimentResult, RunResult, SweepRow, emit, emit_sweep,
                      run_experiment, sweep)
from .metrics import (GaussianityStats, RiskEntry, RiskReport, SeAgreement,
                      alpha_oracle, crossing_threshold, crossing_time,
                      empirical_risk, estimator_u, gaussianity_diagnostic,
                      orthonormality_diagnostic, risk_report, se_agreement)
from .model import (MemoryLimitError, SpikedModel, build_model, matvec,
                    sample_signal, wigner_packed)
from .state_evolution import (SeTrace, asymptotic_risk, fixed_point, h,
                              h_prime, se_recursion)

__version__ = "0.1.0"
