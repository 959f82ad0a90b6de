"""Binary Ising random field on a rectangular lattice.

Pixels take values in {0, 1}; neighbours are the plain 4-neighbourhood with
free (non-wrapping) boundaries. The field has density proportional to
``exp(beta * S(x))`` where ``S`` counts agreeing neighbour pairs. The
critical value is ``beta = 1``.
"""
from __future__ import annotations

import math
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .blik import BootLikCurve, build_curve
from .models_ts._kernels import gibbs_sweeps
from .numkit import RngStream, as_stream, kde_eval, KernelDensity, silverman_bandwidth
from .plugin import EstimatorPlug, ModelPlugin
from .resample import ResamplePlan
from .samplers import AbcConfig, Prior, WeightedSample, abc_reject, bcbl_sample, uniform_prior

__all__ = [
    "BETA_BOUNDS",
    "DEFAULT_CYCLES",
    "MpleResult",
    "as_lattice",
    "suff_stat",
    "max_suff_stat",
    "gibbs_simulate",
    "pseudo_loglik",
    "mple",
    "ising_prior",
    "ising_plugin",
    "ising_bcbl",
    "ising_abc",
    "posterior_mode",
    "read_lattice",
    "write_lattice",
]

BETA_BOUNDS = (0.0, 3.0)
DEFAULT_CYCLES = 200


def as_lattice(x) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim != 2 or min(a.shape) < 2:
        raise ValueError(f"lattice must be 2-D with both sides >= 2, got shape {a.shape}")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("lattice values must be 0 or 1")
    return a.astype(np.int8)


def suff_stat(x) -> int:
    """Number of agreeing 4-neighbour pairs, each unordered pair counted once."""
    a = as_lattice(x)
    return int(np.sum(a[1:, :] == a[:-1, :]) + np.sum(a[:, 1:] == a[:, :-1]))


def max_suff_stat(m: int, n: int) -> int:
    return 2 * m * n - m - n


def gibbs_simulate(beta: float, M: int, N: int, cycles: int, rng: RngStream) -> np.ndarray:
    """Gibbs sampler from an iid Bernoulli(1/2) start, ``cycles`` raster sweeps."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if M < 2 or N < 2:
        raise ValueError("lattice sides must be >= 2")
    gen = rng.gen
    x = gen.integers(0, 2, size=(M, N)).astype(np.int8)
    u = gen.random((int(cycles), M, N))
    return gibbs_sweeps(x, float(beta), u)


def _neighbour_diff(a: np.ndarray) -> np.ndarray:
    """``n1 - n0`` at every pixel (only existing neighbours count)."""
    s = 2 * a.astype(np.int64) - 1
    d = np.zeros(a.shape, dtype=np.int64)
    d[1:, :] += s[:-1, :]
    d[:-1, :] += s[1:, :]
    d[:, 1:] += s[:, :-1]
    d[:, :-1] += s[:, 1:]
    return d


def _tabulate(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts of pixels per ``(n1 - n0, x)`` cell; the pseudo-likelihood depends on nothing else."""
    a = as_lattice(x)
    d = _neighbour_diff(a).ravel()
    ones = np.bincount(d[a.ravel() == 1] + 4, minlength=9)
    total = np.bincount(d + 4, minlength=9)
    return np.arange(-4, 5), ones, total


def pseudo_loglik(beta: float, x) -> float:
    """Log pseudo-likelihood: sum of log full conditionals of the observed pixels."""
    delta, ones, total = _tabulate(x)
    # log P(x | nb) = beta * delta * x - log(1 + exp(beta * delta)), up to the n0 shift
    return float(np.sum(beta * delta * ones - total * np.logaddexp(0.0, beta * delta)))


def _score(beta, delta, ones, total):
    return float(np.sum(delta * (ones - total / (1.0 + np.exp(-beta * delta)))))


class MpleResult(float):
    """The MPLE as a float, with ``boundary`` set when it sits on a search endpoint."""

    boundary: bool

    def __new__(cls, value: float, boundary: bool):
        obj = super().__new__(cls, value)
        obj.boundary = boundary
        return obj


def mple(x) -> MpleResult:
    """Maximum pseudo-likelihood estimate of ``beta`` over :data:`BETA_BOUNDS`.

    The log pseudo-likelihood is concave in ``beta``, so the sign of the score
    at the endpoints decides between a boundary value and a root in between.
    """
    delta, ones, total = _tabulate(x)
    lo, hi = BETA_BOUNDS
    s_lo = _score(lo, delta, ones, total)
    if s_lo <= 0.0:
        return MpleResult(lo, True)
    s_hi = _score(hi, delta, ones, total)
    if s_hi >= 0.0:
        return MpleResult(hi, True)
    root = brentq(_score, lo, hi, args=(delta, ones, total), xtol=1e-12, rtol=1e-12)
    return MpleResult(root, False)


def _estimate(x, rng=None) -> float:
    return float(mple(x))


def ising_prior(hi: float = 2.0) -> Prior:
    return uniform_prior(("beta",), [0.0], [hi])


def _simulate(shape, cycles, theta, n, rng):
    return gibbs_simulate(float(theta[0]), shape[0], shape[1], cycles, rng)


def _summary(x) -> np.ndarray:
    return np.array([float(suff_stat(x))])


def _lattice_size(x) -> int:
    return int(np.asarray(x).size)


def _valid(theta) -> bool:
    return bool(theta[0] >= 0.0)


def ising_plugin(shape: tuple[int, int] = (25, 25), window: int = 5, cycles: int = DEFAULT_CYCLES) -> ModelPlugin:
    return ModelPlugin(
        name="ising",
        param_names=("beta",),
        simulate=partial(_simulate, (int(shape[0]), int(shape[1])), int(cycles)),
        estimator=EstimatorPlug(_estimate, "mple"),
        prior=ising_prior(),
        plan=ResamplePlan.moving_block(window),
        size=_lattice_size,
        check_params=_valid,
        summaries=_summary,
    )


def ising_bcbl(observed, K: int = 100, L: int = 200, window: int = 5, prior: Prior | None = None,
               M: int = 5000, rng: RngStream | int = 0, *, workers: int = 1) -> tuple[WeightedSample, BootLikCurve]:
    """Bootstrap-likelihood posterior for ``beta`` with a moving-block plan."""
    rng = as_stream(rng)
    x = as_lattice(observed)
    model = ising_plugin(x.shape, window)
    (curve,) = build_curve(x, model, K=K, L=L, rng=rng.child(0), workers=workers)
    ws = bcbl_sample([curve], prior or model.prior, M, rng.child(1))
    return ws, curve


def ising_abc(observed, prior: Prior | None = None, budget: int = 20000, quantile: float = 0.01,
              cycles: int = DEFAULT_CYCLES, rng: RngStream | int = 0) -> WeightedSample:
    """Rejection ABC on ``|S(z) - S(y)|`` with the Gibbs simulator."""
    x = as_lattice(observed)
    model = ising_plugin(x.shape, 2, cycles)
    cfg = AbcConfig(budget=budget, quantile=quantile)
    return abc_reject(x, model, prior or model.prior, cfg, rng)


def posterior_mode(draws, weights=None, grid: int = 512) -> float:
    """Mode of a weighted kernel density estimate over the draws."""
    d = np.asarray(draws, dtype=float).ravel()
    w = None if weights is None else np.asarray(weights, dtype=float)
    if np.ptp(d) == 0:
        return float(d[0])
    bw = silverman_bandwidth(d)
    g = np.linspace(d.min(), d.max(), grid)
    dens = kde_eval(KernelDensity(d, bw), g, weights=w)
    return float(g[int(np.argmax(dens))])


# --------------------------------------------------------------------------
# I/O: CSV of 0/1 rows, or plain PBM ("P1")
# --------------------------------------------------------------------------

def write_lattice(path: str | Path, x) -> None:
    a = as_lattice(x)
    path = Path(path)
    if path.suffix.lower() == ".pbm":
        lines = ["P1", f"{a.shape[1]} {a.shape[0]}"] + [" ".join(map(str, row)) for row in a.tolist()]
    else:
        lines = [",".join(map(str, row)) for row in a.tolist()]
    path.write_text("\n".join(lines) + "\n")


def read_lattice(path: str | Path) -> np.ndarray:
    text = Path(path).read_text()
    body = [ln.split("#", 1)[0] for ln in text.splitlines()]
    if body and body[0].strip() == "P1":
        tokens = " ".join(body[1:]).split()
        n, m = int(tokens[0]), int(tokens[1])
        bits = "".join(tokens[2:])
        if len(bits) != m * n:
            raise ValueError(f"{path}: expected {m * n} pixels, found {len(bits)}")
        return as_lattice(np.array([int(c) for c in bits]).reshape(m, n))
    rows = [ln.strip() for ln in body if ln.strip()]
    return as_lattice(np.array([[int(v) for v in r.split(",")] for r in rows]))
