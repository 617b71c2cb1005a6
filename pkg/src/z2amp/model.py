"""Spiked Wigner observation model with dense and streamed backends.

The observation is ``M = lam * v v^T + W`` for a +-1/sqrt(n) sign vector v
and a symmetric Gaussian noise matrix W with Var(W_ij) = 1/n off the
diagonal and Var(W_ii) = 2/n.

Every noise entry is a pure function of (seed, i, j): a counter-based hash
of the unordered index pair feeds an inverse-normal transform.  The dense
backend materialises the packed upper triangle once (n(n+1)/2 doubles); the
streamed backend stores only (n, lam, seed) and regenerates entries inside
every matrix-vector product, keeping memory at O(n).  Both backends walk
row entries in the same order, so their matvec outputs agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

__all__ = [
    "MemoryLimitError",
    "SpikedModel",
    "build_model",
    "matvec",
    "sample_signal",
    "wigner_packed",
]

BACKENDS = ("dense", "streamed")

# Packed-triangle budget for the dense backend.  8 * n(n+1)/2 bytes beyond
# this raises MemoryLimitError instead of thrashing the machine.
DENSE_BUDGET_BYTES = 4 << 30


class MemoryLimitError(RuntimeError):
    """Dense backend would exceed the memory budget; use the streamed one."""


_U64 = np.uint64


@njit(numba.uint64(numba.uint64), cache=True, inline="always")
def _mix(z):
    # splitmix64 finalizer; full-avalanche 64-bit mix
    z = z + _U64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


@njit(numba.float64(numba.float64), cache=True, inline="always")
def _inv_normal_cdf(p):
    # Wichura's PPND16 rational approximation, |error| < 1e-15 in double
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r
              + 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r
              + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r
              + 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0)
        den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r
              + 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r
              + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r
              + 4.2313330701600911252e+1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
              + 2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r
              + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r
              + 4.63033784615654529590e+0) * r + 1.42343711074968357734e+0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
              + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
              + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r
              + 2.05319162663775882187e+0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
              + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
              + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r
              + 5.46378491116411436990e+0) * r + 6.65790464350110377720e+0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
              + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
              + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
              + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(numba.float64(numba.uint64, numba.uint64), cache=True, inline="always")
def _gauss(key, counter):
    # standard normal keyed on (key, counter); 53-bit uniform in (0, 1)
    z = _mix(key ^ _mix(counter))
    u = (np.float64(z >> _U64(11)) + 0.5) * (1.0 / 9007199254740992.0)
    return _inv_normal_cdf(u)


# Canonical pair index: entry (i, j) with lo = min(i,j), hi = max(i,j) lives
# at counter hi*(hi+1)/2 + lo.  This is also the LAPACK upper-packed layout.


@njit(cache=True, parallel=True)
def _noise_packed(n, key, scale):
    ap = np.empty(n * (n + 1) // 2)
    s = scale / math.sqrt(n)
    d = scale * math.sqrt(2.0) / math.sqrt(n)
    for hi in prange(n):
        base = hi * (hi + 1) // 2
        for lo in range(hi + 1):
            g = _gauss(key, _U64(base + lo))
            ap[base + lo] = g * (d if lo == hi else s)
    return ap


@njit(cache=True, parallel=True)
def _streamed_noise_matvec(n, key, scale, y):
    # W @ y, entries regenerated on the fly; one row per prange iteration
    # with a sequential in-row accumulation, so the result is independent
    # of the thread count.
    out = np.empty(n)
    s = scale / math.sqrt(n)
    d = scale * math.sqrt(2.0) / math.sqrt(n)
    for i in prange(n):
        acc = 0.0
        for j in range(n):
            lo = j if j < i else i
            hi = i if j < i else j
            g = _gauss(key, _U64(hi * (hi + 1) // 2 + lo))
            acc += (g * (d if i == j else s)) * y[j]
        out[i] = acc
    return out


@njit(cache=True, parallel=True)
def _packed_noise_matvec(n, ap, y):
    # identical traversal order to the streamed kernel, reading stored
    # entries instead of regenerating them -> bit-identical output
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        row_base = i * (i + 1) // 2
        for j in range(n):
            k = row_base + j if j <= i else j * (j + 1) // 2 + i
            acc += ap[k] * y[j]
        out[i] = acc
    return out


def _derive_streams(seed: int):
    """Split a model seed into the signal RNG and the noise hash key."""
    ss = np.random.SeedSequence(seed)
    sig_ss, noise_ss = ss.spawn(2)
    key = _U64(noise_ss.generate_state(1, np.uint64)[0])
    return np.random.default_rng(sig_ss), key


def sample_signal(n: int, seed: int) -> np.ndarray:
    """Draw an i.i.d. uniform +-1/sqrt(n) sign vector, deterministic in seed."""
    if n < 1:
        raise ValueError(f"signal dimension must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    v = (2.0 * rng.integers(0, 2, size=n) - 1.0) / math.sqrt(n)
    v.flags.writeable = False
    return v


def wigner_packed(n: int, seed: int, noise_scale: float = 1.0) -> np.ndarray:
    """Packed upper triangle of the noise matrix a model with this seed sees.

    Entry (i, j), i <= j, is at index j*(j+1)/2 + i.  Exposed mainly for the
    calibration tests; build_model uses the same generator internally.
    """
    _, key = _derive_streams(seed)
    return _noise_packed(n, key, noise_scale)


@dataclass(frozen=True)
class SpikedModel:
    """Immutable rank-one-spike-plus-noise observation.

    matvec is safe to call concurrently; the packed triangle (dense backend
    only) and the signal are read-only arrays.
    """

    n: int
    lam: float
    seed: int
    backend: str
    signal: np.ndarray
    noise_scale: float = 1.0
    _key: np.uint64 = field(default=_U64(0), repr=False)
    _packed: np.ndarray | None = field(default=None, repr=False)

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """M @ y; deterministic in (model, y) and the thread count."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {y.shape}")
        if self.noise_scale != 0.0:
            if self.backend == "dense":
                out = _packed_noise_matvec(self.n, self._packed, y)
            else:
                out = _streamed_noise_matvec(self.n, self._key, self.noise_scale, y)
        else:
            out = np.zeros(self.n)
        if self.lam != 0.0:
            out += (self.lam * float(self.signal @ y)) * self.signal
        return out

    def with_signal(self, signal: np.ndarray) -> "SpikedModel":
        """Same noise realisation, relabelled ground truth (test helper)."""
        signal = np.asarray(signal, dtype=np.float64).copy()
        signal.flags.writeable = False
        return SpikedModel(self.n, self.lam, self.seed, self.backend, signal,
                           self.noise_scale, self._key, self._packed)


def build_model(n: int, lam: float, seed: int, backend: str = "dense",
                noise_scale: float = 1.0) -> SpikedModel:
    """Generate ground truth and noise for M = lam*v v^T + noise_scale*W.

    noise_scale is a test hook: 0.0 gives the pure-spike matrix (and with
    lam = 0.0 the zero matrix).  Dense materialises the packed triangle;
    streamed defers generation to matvec time.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if lam < 0.0:
        raise ValueError(f"signal-to-noise ratio must be >= 0, got {lam}")
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}, expected one of {BACKENDS}")
    rng, key = _derive_streams(seed)
    signal = (2.0 * rng.integers(0, 2, size=n) - 1.0) / math.sqrt(n)
    signal.flags.writeable = False
    packed = None
    if backend == "dense" and noise_scale != 0.0:
        need = 8 * n * (n + 1) // 2
        if need > DENSE_BUDGET_BYTES:
            raise MemoryLimitError(
                f"dense backend needs {need / 2**30:.1f} GiB for n={n}; "
                "use backend='streamed'")
        try:
            packed = _noise_packed(n, key, noise_scale)
        except MemoryError as exc:
            raise MemoryLimitError(
                f"allocation failed for dense backend at n={n}; "
                "use backend='streamed'") from exc
        packed.flags.writeable = False
    return SpikedModel(n, float(lam), seed, backend, signal, float(noise_scale),
                       key, packed)


def matvec(model: SpikedModel, y: np.ndarray) -> np.ndarray:
    """Functional alias for SpikedModel.matvec."""
    return model.matvec(y)
