"""Rejection ABC, BC_el and BC_bl importance samplers, resampling and summaries."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .blik import BootLikCurve
from .elik import ConstraintSet, ELSolveError, el_eval
from .numkit import RngStream, as_stream
from .plugin import EstimatorPlug, ModelPlugin, SimulationError

__all__ = [
    "Prior",
    "WeightedSample",
    "AbcConfig",
    "SamplingError",
    "abc_simulate",
    "abc_select",
    "abc_reject",
    "abc_estimator",
    "bcel_sample",
    "bcbl_sample",
    "importance_resample",
    "PosteriorSummary",
    "posterior_summaries",
    "write_samples_csv",
    "read_samples_csv",
    "uniform_prior",
    "point_prior",
]

log = logging.getLogger(__name__)


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Prior:
    """Prior distribution: ``sample(m, gen) -> (m, d)`` draws."""

    sample_fn: Callable[[int, np.random.Generator], np.ndarray]
    names: tuple[str, ...]
    label: str = ""
    support: str = ""
    logpdf: Callable[[np.ndarray], np.ndarray] | None = None

    def sample(self, m: int, rng: RngStream) -> np.ndarray:
        draws = np.asarray(self.sample_fn(int(m), rng.gen), dtype=float)
        return draws.reshape(int(m), len(self.names))


def _uniform_box(lo, hi, m, gen):
    return gen.uniform(lo, hi, size=(m, len(lo)))


def uniform_prior(names: Sequence[str], lo: Sequence[float], hi: Sequence[float]) -> Prior:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    desc = " x ".join(f"U({a:g},{b:g})" for a, b in zip(lo, hi))
    return Prior(partial(_uniform_box, lo, hi), tuple(names), label=desc, support=desc)


def _point(theta, m, gen):
    return np.tile(theta, (m, 1))


def point_prior(names: Sequence[str], theta: Sequence[float]) -> Prior:
    theta = np.asarray(theta, dtype=float)
    return Prior(partial(_point, theta), tuple(names), label=f"point mass at {theta.tolist()}")


@dataclass
class WeightedSample:
    """``M`` parameter draws with nonnegative importance weights.

    ``weights`` are scaled so the largest is one; ``log_weights`` keeps the
    unscaled log-weights and ``log_norm`` the log of their sum.
    """

    draws: np.ndarray
    weights: np.ndarray
    names: tuple[str, ...]
    log_norm: float = 0.0
    info: dict[str, Any] = field(default_factory=dict)
    log_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim == 1:
            self.draws = self.draws[:, None]
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def M(self) -> int:
        return self.draws.shape[0]

    @property
    def ess(self) -> float:
        top = self.weights.max(initial=0.0)
        if not top > 0:
            return 0.0
        w = self.weights / top
        s = w.sum()
        return float(s * s / np.dot(w, w))

    def normalized(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def mean(self) -> np.ndarray:
        return self.normalized() @ self.draws


# --------------------------------------------------------------------------
# rejection ABC
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AbcConfig:
    """Rejection-ABC settings.

    Exactly one of ``epsilon`` and ``quantile`` is set. ``scale`` divides the
    summaries before the Euclidean distance; ``"mad"`` uses the median
    absolute deviation of the simulated summaries.
    """

    budget: int
    epsilon: float | None = None
    quantile: float | None = None
    scale: str | Sequence[float] | None = None
    summaries: Callable[[Any], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("ABC budget must be >= 1")
        if (self.epsilon is None) == (self.quantile is None):
            raise ValueError("set exactly one of epsilon and quantile")
        if self.quantile is not None and not 0.0 < self.quantile <= 1.0:
            raise ValueError("quantile must lie in (0, 1]")
        if self.epsilon is not None and not self.epsilon >= 0.0:
            raise ValueError("epsilon must be >= 0")


def _distances(sims: np.ndarray, obs: np.ndarray, scale) -> np.ndarray:
    diff = sims - obs
    if scale is None:
        s = np.ones(obs.size)
    elif isinstance(scale, str):
        if scale != "mad":
            raise ValueError(f"unknown scale {scale!r}")
        s = np.median(np.abs(sims - np.median(sims, axis=0)), axis=0)
        s = np.where(s > 0, s, 1.0)
    else:
        s = np.asarray(scale, dtype=float)
    return np.sqrt(((diff / s) ** 2).sum(axis=1))


def abc_simulate(observed, model: ModelPlugin, prior: Prior, cfg: AbcConfig, rng: RngStream | int):
    """Draw ``budget`` prior parameters, simulate, and return ``(thetas, distances)``.

    A simulation that raises :class:`SimulationError` gets infinite distance.
    """
    rng = as_stream(rng)
    summ = cfg.summaries or model.summaries
    if summ is None:
        raise ValueError(f"model {model.name} has no ABC summaries")
    obs = np.atleast_1d(np.asarray(summ(observed), dtype=float))
    n = model.size(observed)
    thetas = prior.sample(cfg.budget, rng.child(0))
    sims = np.full((cfg.budget, obs.size), np.nan)
    for k in range(cfg.budget):
        try:
            sims[k] = summ(model.simulate(thetas[k], n, rng.child(1, k)))
        except SimulationError:
            pass  # exploded trajectory: never accepted
    bad = ~np.all(np.isfinite(sims), axis=1)
    if bad.all():
        raise SamplingError("every ABC simulation failed")
    dist = np.full(cfg.budget, np.inf)
    dist[~bad] = _distances(sims[~bad], obs, cfg.scale)
    return thetas, dist


def abc_select(thetas: np.ndarray, dist: np.ndarray, *, epsilon: float | None = None,
               quantile: float | None = None) -> np.ndarray:
    """Indices of accepted draws under a fixed tolerance or a quantile."""
    if quantile is not None:
        k = max(1, math.ceil(quantile * dist.size - 1e-9))
        return np.sort(np.argsort(dist, kind="stable")[:k])
    ok = np.flatnonzero(dist <= epsilon)
    if ok.size == 0:
        raise SamplingError(f"no draw within epsilon={epsilon}; smallest distance {dist.min():.6g}")
    return ok


def abc_reject(observed, model: ModelPlugin, prior: Prior, cfg: AbcConfig, rng: RngStream | int) -> WeightedSample:
    """Rejection ABC; accepted draws get unit weight."""
    thetas, dist = abc_simulate(observed, model, prior, cfg, rng)
    idx = abc_select(thetas, dist, epsilon=cfg.epsilon, quantile=cfg.quantile)
    return WeightedSample(
        thetas[idx], np.ones(idx.size), prior.names,
        info={"accepted": int(idx.size), "budget": cfg.budget, "max_distance": float(dist[idx].max())},
    )


def _abc_point(model, prior, cfg, data, rng=None):
    ws = abc_reject(data, model, prior, cfg, as_stream(rng if rng is not None else 0))
    return ws.mean()


def abc_estimator(model: ModelPlugin, prior: Prior | None = None, budget: int = 200,
                  quantile: float = 0.1, scale=None) -> EstimatorPlug:
    """Point estimator given by a small rejection-ABC posterior mean.

    Plugging this into :func:`~bootlik.blik.build_curve` gives a bootstrap
    likelihood built on an ABC estimator. It consumes the stream passed by the
    caller, so curves stay reproducible.
    """
    cfg = AbcConfig(budget=budget, quantile=quantile, scale=scale)
    return EstimatorPlug(partial(_abc_point, model, prior or model.prior, cfg), f"abc-mean[{budget}]")


# --------------------------------------------------------------------------
# importance samplers
# --------------------------------------------------------------------------

def _from_log_weights(draws, logw, names, info) -> WeightedSample:
    finite = np.isfinite(logw)
    if not np.any(finite):
        raise SamplingError("all importance weights are zero")
    top = logw[finite].max()
    w = np.where(finite, np.exp(np.where(finite, logw, top) - top), 0.0)
    info = dict(info, nonzero=int(finite.sum()))
    return WeightedSample(draws, w, names, log_norm=float(top + math.log(w.sum())), info=info,
                          log_weights=np.asarray(logw, dtype=float))


def bcel_sample(observed, prior: Prior, constraints: ConstraintSet, M: int, rng: RngStream | int) -> WeightedSample:
    """Weight ``M`` prior draws by their empirical likelihood."""
    rng = as_stream(rng)
    draws = prior.sample(M, rng)
    logw = np.empty(M)
    failed = 0
    for k in range(M):
        try:
            logw[k] = el_eval(observed, draws[k], constraints).log_el
        except (ELSolveError, ValueError):
            logw[k] = -math.inf
            failed += 1
    try:
        return _from_log_weights(draws, logw, prior.names, {"solver_failures": failed})
    except SamplingError:
        raise SamplingError("all empirical-likelihood weights are zero: the prior puts no mass "
                            "where zero lies inside the constraint hull") from None


def bcbl_sample(curves: Sequence[BootLikCurve], prior: Prior, M: int, rng: RngStream | int) -> WeightedSample:
    """Weight ``M`` prior draws by the bootstrap likelihood.

    The log-weight of a vector draw is the sum of its components' curve
    values; any component outside its curve's support gives weight zero.
    """
    rng = as_stream(rng)
    draws = prior.sample(M, rng)
    if draws.shape[1] != len(curves):
        raise ValueError(f"prior has {draws.shape[1]} components but {len(curves)} curves were given")
    logw = np.zeros(M)
    for c, curve in enumerate(curves):
        inside = np.isfinite(logw)
        logw[inside] += curve.log_bl(draws[inside, c])
    try:
        return _from_log_weights(draws, logw, prior.names, {})
    except SamplingError:
        raise SamplingError("every prior draw falls outside the bootstrap likelihood support; "
                            "increase K or narrow the prior") from None


def importance_resample(ws: WeightedSample, N: int, rng: RngStream | int) -> np.ndarray:
    """Multinomial resampling of ``N`` draws proportional to the weights."""
    rng = as_stream(rng)
    w = ws.weights
    if not np.any(w > 0):
        raise SamplingError("no positive weight to resample from")
    cum = np.cumsum(w / w.sum())
    u = rng.gen.random(int(N)) * cum[-1]
    idx = np.searchsorted(cum, u, side="right")
    return ws.draws[np.minimum(idx, ws.M - 1)]


# --------------------------------------------------------------------------
# summaries and I/O
# --------------------------------------------------------------------------

@dataclass
class PosteriorSummary:
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray
    mse: np.ndarray | None = None


def posterior_summaries(samples, true_theta=None) -> PosteriorSummary:
    """Mean, sd and 2.5/50/97.5% quantiles per component.

    ``mse`` is the squared error of the posterior mean against the truth; an
    experiment averages it over replicates to get the reported MSE.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    q = np.quantile(x, [0.025, 0.5, 0.975], axis=0)
    mse = None if true_theta is None else (mean - np.atleast_1d(np.asarray(true_theta, dtype=float))) ** 2
    return PosteriorSummary(mean, sd, q[0], q[1], q[2], mse)


def write_samples_csv(path: str | Path, draws: np.ndarray, names: Sequence[str], weights=None) -> None:
    draws = np.asarray(draws, dtype=float).reshape(len(draws), len(names))
    w = np.ones(len(draws)) if weights is None else np.asarray(weights, dtype=float)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([*names, "weight"])
        for row, wi in zip(draws, w):
            out.writerow([repr(float(v)) for v in row] + [repr(float(wi))])


def read_samples_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty samples file")
    header = rows[0]
    body = np.asarray([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    body = body.reshape(-1, len(header))
    if header[-1] == "weight":
        return body[:, :-1], body[:, -1], tuple(header[:-1])
    return body, np.ones(body.shape[0]), tuple(header)
