"""Adaptive tanh denoiser.

For an iterate x in R^n the denoiser is eta(x) = gamma * tanh(pi * x)
applied entrywise, with

    pi    = sqrt(max(n * (||x||^2 - 1), 1))
    gamma = 1 / ||tanh(pi * x)||_2

so the denoised iterate always has unit Euclidean norm.  Both parameters
are recomputed from scratch at every iteration.  np.tanh saturates to
exactly +-1.0 beyond |z| ~ 19 in double precision, which covers the
overflow clamp for free (derivative exactly 0 there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateIterateError",
    "DenoiserParams",
    "apply",
    "apply_derivative",
    "compute_params",
    "iterate_scale",
]


class DegenerateIterateError(ValueError):
    """The iterate is (numerically) all-zero, so gamma is undefined."""


@dataclass(frozen=True)
class DenoiserParams:
    pi: float
    gamma: float
    mean_derivative: float


def iterate_scale(x: np.ndarray) -> float:
    """pi = sqrt(max(n(||x||^2 - 1), 1)) for the iterate x of dimension n."""
    n = x.size
    return math.sqrt(max(n * (float(x @ x) - 1.0), 1.0))


def compute_params(x: np.ndarray) -> DenoiserParams:
    """Denoiser parameters (pi, gamma, <eta'(x)>) for the iterate x.

    <eta'(x)> is the coordinate mean of gamma*pi*(1 - tanh^2(pi*x)), the
    coefficient of the memory-correction term in the iteration.
    """
    x = np.asarray(x, dtype=np.float64)
    pi = iterate_scale(x)
    t = np.tanh(pi * x)
    norm = float(np.linalg.norm(t))
    if norm == 0.0:
        raise DegenerateIterateError("all-zero iterate: normalizer undefined")
    gamma = 1.0 / norm
    mean_derivative = gamma * pi * float(np.mean(1.0 - t * t))
    return DenoiserParams(pi=pi, gamma=gamma, mean_derivative=mean_derivative)


def apply(params: DenoiserParams, x: np.ndarray) -> np.ndarray:
    """gamma * tanh(pi * x); unit norm when params were computed from x."""
    return params.gamma * np.tanh(params.pi * np.asarray(x, dtype=np.float64))


def apply_derivative(params: DenoiserParams, x: np.ndarray) -> np.ndarray:
    """Entrywise derivative gamma * pi * (1 - tanh^2(pi * x))."""
    t = np.tanh(params.pi * np.asarray(x, dtype=np.float64))
    return params.gamma * params.pi * (1.0 - t * t)
