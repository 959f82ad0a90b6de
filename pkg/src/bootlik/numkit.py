"""Seeded random streams and the numerical primitives used by the samplers.

Everything here is a pure function of its inputs, except :class:`RngStream`,
which owns a generator and must not be shared between concurrent tasks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "RngStream",
    "as_stream",
    "KernelDensity",
    "kde_eval",
    "silverman_bandwidth",
    "Smoother",
    "smooth_fit",
    "smooth_eval",
    "bessel_i",
    "log_bessel_i",
    "DegenerateSampleError",
]

_SEED_MASK = (1 << 64) - 1
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class DegenerateSampleError(ValueError):
    """Raised when a sample has no spread to estimate a density from."""


@dataclass
class RngStream:
    """A reproducible random stream addressed by ``(root_seed, path)``.

    The stream is derived with :class:`numpy.random.SeedSequence`, using the
    path as the spawn key, so any stream can be rebuilt independently of the
    order in which streams were created. That is what lets replicate loops
    run in any order or in parallel without changing results.
    """

    root_seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.root_seed = int(self.root_seed) & _SEED_MASK
        self.path = tuple(int(p) for p in self.path)

    def child(self, *labels: int) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(labels))

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(int(np.random.SeedSequence().entropy) & _SEED_MASK)
    return RngStream(int(rng))


# --------------------------------------------------------------------------
# Kernel density estimation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelDensity:
    """Gaussian kernel density estimate over a one-dimensional sample."""

    samples: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size < 1:
            raise ValueError("kernel density needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("kernel density samples must be finite")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_samples(cls, samples: Sequence[float] | np.ndarray) -> "KernelDensity":
        samples = np.asarray(samples, dtype=float).ravel()
        return cls(samples, silverman_bandwidth(samples))


def kde_eval(kd: KernelDensity, t, weights: np.ndarray | None = None):
    """Evaluate ``(1/(L s)) * sum_j phi((t - x_j)/s)``.

    ``t`` may be a scalar or an array; optional ``weights`` replace the
    uniform ``1/L`` factor (they are normalised to sum to one).
    """
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("evaluation point must be finite")
    s = kd.bandwidth
    u = (t_arr[..., None] - kd.samples) / s
    k = np.exp(-0.5 * u * u) / _SQRT_2PI
    if weights is None:
        dens = k.mean(axis=-1) / s
    else:
        w = np.asarray(weights, dtype=float)
        dens = (k @ (w / w.sum())) / s
    return float(dens) if dens.ndim == 0 else dens


def silverman_bandwidth(samples: Sequence[float] | np.ndarray) -> float:
    """Silverman's rule of thumb, ``0.9 min(sd, IQR/1.34) L^(-1/5)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("bandwidth needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    if sd <= 0.0:
        raise DegenerateSampleError("zero spread in sample; cannot choose a bandwidth")
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * x.size ** (-0.2)
    return max(h, 1e-9 * (1.0 + abs(float(x.mean()))))


# --------------------------------------------------------------------------
# Local polynomial smoothing (loess-style)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Smoother:
    """Locally weighted polynomial regression through ``(x, y)`` knots.

    Each evaluation fits a weighted polynomial of ``degree`` to the
    ``floor(span * n)`` nearest knots with tricube weights. Fits are computed
    on demand, so the object only stores the knots.
    """

    x: np.ndarray
    y: np.ndarray
    span: float = 0.75
    degree: int = 2

    @property
    def lo(self) -> float:
        return float(self.x.min())

    @property
    def hi(self) -> float:
        return float(self.x.max())

    def __call__(self, x):
        return smooth_eval(self, x)

    def residuals(self) -> np.ndarray:
        return self.y - smooth_eval(self, self.x)


def smooth_fit(x, y, span: float = 0.75, degree: int = 2) -> Smoother:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("smoother knots must be finite")
    if degree not in (0, 1, 2):
        raise ValueError("degree must be 0, 1 or 2")
    if not 0.0 < span <= 1.0:
        raise ValueError("span must lie in (0, 1]")
    if x.size < degree + 2:
        raise ValueError(f"need at least {degree + 2} points for a degree-{degree} smoother, got {x.size}")
    if span * x.size < degree + 1:
        raise ValueError("span too small: fewer neighbours than polynomial coefficients")
    if np.ptp(x) <= 0.0:
        raise ValueError("smoother knots have no spread in x")
    order = np.argsort(x, kind="stable")
    return Smoother(x[order], y[order], float(span), int(degree))


def _local_fit(sm: Smoother, xq: np.ndarray) -> np.ndarray:
    n = sm.x.size
    q = min(n, max(sm.degree + 1, int(math.floor(sm.span * n))))
    dist = np.abs(xq[:, None] - sm.x[None, :])
    h = np.partition(dist, q - 1, axis=1)[:, q - 1]
    # the q-th neighbour keeps a small positive weight
    h = np.maximum(h * (1.0 + 1e-6), 1e-12 * (1.0 + np.abs(xq)))
    u = np.clip(dist / h[:, None], 0.0, 1.0)
    w = (1.0 - u**3) ** 3

    p = sm.degree + 1
    z = (sm.x[None, :] - xq[:, None]) / h[:, None]
    design = np.stack([z**k for k in range(p)], axis=-1)  # (m, n, p)
    wd = design * w[..., None]
    xtwx = np.einsum("mnp,mnq->mpq", wd, design)
    xtwy = np.einsum("mnp,n->mp", wd, sm.y)
    out = np.empty(xq.size)
    try:
        out[:] = np.linalg.solve(xtwx, xtwy[..., None])[:, 0, 0]
    except np.linalg.LinAlgError:
        for i in range(xq.size):
            coef, *_ = np.linalg.lstsq(xtwx[i], xtwy[i], rcond=None)
            out[i] = coef[0]
    return out


def smooth_eval(sm: Smoother, x):
    """Evaluate the smoother at ``x`` (scalar or array).

    No extrapolation guard is applied here; callers that care about the knot
    hull (the bootstrap likelihood does) check it themselves.
    """
    xa = np.asarray(x, dtype=float)
    flat = xa.ravel()
    out = np.empty(flat.size)
    chunk = max(1, 200_000 // max(sm.x.size, 1))
    for start in range(0, flat.size, chunk):
        out[start:start + chunk] = _local_fit(sm, flat[start:start + chunk])
    out = out.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Modified Bessel functions of the first kind, integer order
# --------------------------------------------------------------------------

def bessel_i(order: int, z: float) -> float:
    """``I_order(z)`` by its ascending power series.

    Terms are accumulated until they fall below ``1e-17`` of the running
    sum after the peak term; negative integer orders reflect to ``|order|``.
    """
    nu = abs(int(order))
    z = float(z)
    if z < 0:
        raise ValueError("bessel_i is defined here for z >= 0")
    if z == 0.0:
        return 1.0 if nu == 0 else 0.0
    half = 0.5 * z
    # first term (z/2)^nu / nu!, via logs to avoid overflow of nu!
    term = math.exp(nu * math.log(half) - math.lgamma(nu + 1))
    total = term
    q = half * half
    j = 0
    while True:
        j += 1
        term *= q / (j * (j + nu))
        total += term
        if term <= 1e-17 * total and j > half:
            break
    return total


def log_bessel_i(orders, z: float) -> np.ndarray:
    """``log I_k(z)`` for an array of integer orders, in log space.

    Same power series as :func:`bessel_i`, but summed with a log-sum-exp so
    large arguments (``z`` in the hundreds) neither overflow nor lose terms.
    """
    k = np.abs(np.asarray(orders, dtype=np.int64))
    z = float(z)
    if z < 0:
        raise ValueError("log_bessel_i is defined here for z >= 0")
    if z == 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    n_terms = int(math.ceil(0.5 * z + 12.0 * math.sqrt(z) + 40.0))
    j = np.arange(n_terms, dtype=float)
    lg_j = gammaln(j + 1.0)
    kk = k.ravel().astype(float)[:, None]
    logt = (2.0 * j + kk) * math.log(0.5 * z) - lg_j - gammaln(j + kk + 1.0)
    m = logt.max(axis=1, keepdims=True)
    out = (m + np.log(np.exp(logt - m).sum(axis=1, keepdims=True)))[:, 0]
    return out.reshape(k.shape)

