"""Two-deme microsatellite model with a pairwise composite likelihood.

A dataset is an integer array of repeat numbers with shape
``(loci, 2, genes_per_deme)``; axis 1 is the deme. Only differences between
repeat numbers enter the likelihood, so alleles are stored relative to an
arbitrary ancestral value.

Time is in coalescent units where a pair of lineages in one deme coalesces
at rate 1, and each lineage carries stepwise (+1/-1) mutations at rate
``theta / 2``. The two demes are isolated until ``tau`` in the past and merge
into one ancestral deme beyond it. Under this model the pairwise
difference distribution is exactly

* same deme: ``rho^|d| / sqrt(1 + 2 theta)``
* different demes: ``exp(-tau theta) / sqrt(1 + 2 theta) *
  sum_m rho^|m| I_{|d| - m}(tau theta)``

with ``rho = theta / (1 + theta + sqrt(1 + 2 theta))``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .elik import ConstraintSet
from .numkit import RngStream, bessel_i, log_bessel_i
from .plugin import EstimatorPlug, FitError, ModelPlugin
from .resample import ResamplePlan, Scheme
from .samplers import Prior

__all__ = [
    "PopGenParams",
    "rho",
    "pair_loglik_same",
    "pair_loglik_diff",
    "diff_tail_bound",
    "pair_histograms",
    "composite_loglik",
    "mcle",
    "simulate_popgen",
    "popgen_prior",
    "popgen_summaries",
    "popgen_score_constraints",
    "popgen_plugin",
    "read_microsat_csv",
    "write_microsat_csv",
    "TAU_BOUNDS",
    "THETA_BOUNDS",
]

TAU_BOUNDS = (1e-3, 5.0)
THETA_BOUNDS = (0.1, 50.0)
DEFAULT_M_MAX = 30


@dataclass(frozen=True)
class PopGenParams:
    tau: float
    theta: float

    def __post_init__(self) -> None:
        if not (self.tau > 0 and self.theta > 0):
            raise ValueError(f"tau and theta must be positive, got ({self.tau}, {self.theta})")

    def as_array(self) -> np.ndarray:
        return np.array([self.tau, self.theta])


def rho(theta: float) -> float:
    theta = float(theta)
    if theta < 0:
        raise ValueError("theta must be >= 0")
    return theta / (1.0 + theta + math.sqrt(1.0 + 2.0 * theta))


def pair_loglik_same(d: int, theta: float) -> float:
    """Log-probability of a repeat difference ``d`` for two genes of one deme."""
    r = rho(theta)
    ad = abs(int(d))
    if ad == 0:
        return -0.5 * math.log1p(2.0 * theta)
    if r == 0.0:
        return -math.inf
    return ad * math.log(r) - 0.5 * math.log1p(2.0 * theta)


def pair_loglik_diff(d: int, tau: float, theta: float, m_max: int = DEFAULT_M_MAX) -> float:
    """Log-probability of a difference ``d`` between genes of different demes.

    The sum over ``m`` is truncated to ``|m| <= m_max``;
    :func:`diff_tail_bound` bounds the omitted mass.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    r = rho(theta)
    z = tau * theta
    ad = abs(int(d))
    total = 0.0
    for m in range(-m_max, m_max + 1):
        w = 1.0 if m == 0 else r ** abs(m)
        if w == 0.0:
            continue
        total += w * bessel_i(ad - m, z)
    if total <= 0.0:
        return -math.inf
    return -z - 0.5 * math.log1p(2.0 * theta) + math.log(total)


def diff_tail_bound(tau: float, theta: float, m_max: int = DEFAULT_M_MAX) -> float:
    """Upper bound on the probability mass dropped by the ``m`` truncation.

    Summed over all ``d`` the omitted terms are exactly
    ``2 rho^(m_max+1) / ((1 - rho) sqrt(1 + 2 theta))``, which bounds the
    error at any single ``d``.
    """
    r = rho(theta)
    return 2.0 * r ** (m_max + 1) / ((1.0 - r) * math.sqrt(1.0 + 2.0 * theta))


# --------------------------------------------------------------------------
# vectorised likelihood
# --------------------------------------------------------------------------

def _as_dataset(data) -> np.ndarray:
    y = np.asarray(data)
    if y.ndim != 3 or y.shape[1] != 2 or y.shape[2] < 1:
        raise ValueError("microsatellite data must have shape (loci, 2, genes_per_deme)")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise ValueError("repeat numbers must be integers")
        y = y.astype(np.int64)
    return y


def pair_histograms(data, per_locus: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Counts of ``|d|`` over same-deme and different-deme gene pairs.

    Returns ``(same, diff)``, each indexed by ``|d|``; with ``per_locus`` the
    arrays have one row per locus.
    """
    y = _as_dataset(data)
    loci, _, g = y.shape
    iu = np.triu_indices(g, 1)
    within = np.abs(y[:, :, :, None] - y[:, :, None, :])[:, :, iu[0], iu[1]].reshape(loci, -1)
    between = np.abs(y[:, 0, :, None] - y[:, 1, None, :]).reshape(loci, -1)
    top = int(max(within.max(initial=0), between.max(initial=0))) + 1
    if per_locus:
        same = np.zeros((loci, top), dtype=np.int64)
        diff = np.zeros((loci, top), dtype=np.int64)
        for k in range(loci):
            same[k] = np.bincount(within[k], minlength=top)
            diff[k] = np.bincount(between[k], minlength=top)
        return same, diff
    return np.bincount(within.ravel(), minlength=top), np.bincount(between.ravel(), minlength=top)


def _log_pmfs(top: int, tau: float, theta: float, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Same- and different-deme log-pmfs for ``|d| = 0 .. top - 1``."""
    r = rho(theta)
    half_log = 0.5 * math.log1p(2.0 * theta)
    d = np.arange(top)
    log_same = d * (math.log(r) if r > 0 else -np.inf) - half_log
    if r == 0:
        log_same[0] = -half_log
    z = tau * theta
    m = np.arange(-m_max, m_max + 1)
    orders = np.abs(d[:, None] - m[None, :])
    scaled = np.exp(log_bessel_i(np.arange(orders.max() + 1), z) - z)
    w = r ** np.abs(m)
    with np.errstate(divide="ignore"):
        log_diff = np.log(scaled[orders] @ w) - half_log
    return log_same, log_diff


def composite_loglik(data, p: PopGenParams, m_max: int = DEFAULT_M_MAX) -> float:
    """Pairwise composite log-likelihood summed over loci."""
    same, diff = pair_histograms(data)
    return _cl_from_hist(same, diff, p.tau, p.theta, m_max)


def _cl_from_hist(same, diff, tau, theta, m_max) -> float:
    log_same, log_diff = _log_pmfs(same.size, tau, theta, m_max)
    tot = 0.0
    ns = same > 0
    nd = diff > 0
    tot += float(same[ns] @ log_same[ns])
    tot += float(diff[nd] @ log_diff[nd])
    return tot


def _neg_cl(u, same, diff, m_max, scale):
    tau, theta = math.exp(u[0]), math.exp(u[1])
    val = _cl_from_hist(same, diff, tau, theta, m_max)
    return -val / scale if np.isfinite(val) else 1e300


def mcle(data, m_max: int = DEFAULT_M_MAX) -> PopGenParams:
    """Maximum composite likelihood estimate of ``(tau, theta)``.

    Bounded L-BFGS-B on ``(log tau, log theta)`` over the box
    :data:`TAU_BOUNDS` x :data:`THETA_BOUNDS`, started from the four corners
    and the centre; the best finite optimum wins.
    """
    y = _as_dataset(data)
    if y.shape[0] < 10:
        raise FitError("composite likelihood estimation needs at least 10 loci")
    same, diff = pair_histograms(y)
    scale = float(same.sum() + diff.sum())
    lo = np.log([TAU_BOUNDS[0], THETA_BOUNDS[0]])
    hi = np.log([TAU_BOUNDS[1], THETA_BOUNDS[1]])
    starts = [lo, hi, np.array([lo[0], hi[1]]), np.array([hi[0], lo[1]]), 0.5 * (lo + hi)]
    best = None
    for u0 in starts:
        res = minimize(_neg_cl, u0, args=(same, diff, m_max, scale), method="L-BFGS-B",
                       bounds=list(zip(lo, hi)), options={"ftol": 1e-12, "gtol": 1e-8, "maxiter": 200})
        if np.all(np.isfinite(res.x)) and res.fun < 1e299 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("composite likelihood optimisation failed from every start")
    tau, theta = np.exp(np.clip(best.x, lo, hi))
    return PopGenParams(float(tau), float(theta))


def _estimate(m_max, data, rng=None) -> np.ndarray:
    return mcle(data, m_max).as_array()


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def _simulate_locus(tau: float, theta: float, g: int, gen: np.random.Generator) -> np.ndarray:
    n_nodes = 4 * g
    parent = np.full(n_nodes, -1, dtype=np.int64)
    time = np.zeros(n_nodes)
    demes = [list(range(g)), list(range(g, 2 * g))]
    nxt = 2 * g
    t = 0.0

    def merge(pool: list, when: float) -> None:
        nonlocal nxt
        i, j = sorted(gen.choice(len(pool), size=2, replace=False))
        a, b = pool.pop(j), pool.pop(i)
        parent[a] = parent[b] = nxt
        time[nxt] = when
        pool.append(nxt)
        nxt += 1

    while True:
        rates = [len(p) * (len(p) - 1) / 2.0 for p in demes]
        total = rates[0] + rates[1]
        if total == 0.0:
            break
        step = gen.exponential(1.0 / total)
        if t + step >= tau:
            break
        t += step
        pool = demes[0] if gen.random() * total < rates[0] else demes[1]
        merge(pool, t)
    t = max(t, tau)
    pool = demes[0] + demes[1]
    while len(pool) > 1:
        n = len(pool)
        t += gen.exponential(2.0 / (n * (n - 1)))
        merge(pool, t)

    root = pool[0]
    allele = np.zeros(nxt, dtype=np.int64)
    for node in range(root - 1, -1, -1):
        par = parent[node]
        if par < 0:
            continue
        k = gen.poisson(0.5 * theta * (time[par] - time[node]))
        step = 2 * gen.binomial(k, 0.5) - k if k > 0 else 0
        allele[node] = allele[par] + step
    return allele[: 2 * g].reshape(2, g)


def simulate_popgen(p: PopGenParams, loci: int, genes_per_deme: int, rng: RngStream) -> np.ndarray:
    """Simulate independent loci under the two-deme stepwise-mutation model."""
    if loci < 1 or genes_per_deme < 1:
        raise ValueError("need at least one locus and one gene per deme")
    gen = rng.gen
    return np.stack([_simulate_locus(p.tau, p.theta, genes_per_deme, gen) for _ in range(loci)])


# --------------------------------------------------------------------------
# plug-in pieces
# --------------------------------------------------------------------------

def _prior_draw(m, gen):
    tau = gen.uniform(0.05, 2.0, size=m)
    theta = np.exp(gen.uniform(0.0, math.log(30.0), size=m))
    return np.column_stack([tau, theta])


def popgen_prior() -> Prior:
    return Prior(_prior_draw, ("tau", "theta"), label="U(0.05,2) x logU(1,30)",
                 support="0.05 <= tau <= 2, 1 <= theta <= 30")


def popgen_summaries(data) -> np.ndarray:
    """Mean within-deme and between-deme ``|d|`` and mean within-deme variance."""
    y = _as_dataset(data).astype(float)
    same, diff = pair_histograms(y.astype(np.int64))
    d = np.arange(same.size)
    within = float(same @ d) / max(same.sum(), 1)
    between = float(diff @ d) / max(diff.sum(), 1)
    var = float(y.var(axis=2, ddof=1).mean()) if y.shape[2] > 1 else 0.0
    return np.array([within, between, var])


def _score_h(m_max, data, theta_vec):
    tau, theta = (float(v) for v in theta_vec)
    if not (tau > 0 and theta > 0):
        return np.full((np.asarray(data).shape[0], 2), np.nan)
    same, diff = pair_histograms(data, per_locus=True)
    top = same.shape[1]

    def per_locus(t, th):
        ls, ld = _log_pmfs(top, t, th, m_max)
        ls = np.where(same.sum(axis=0) > 0, ls, 0.0)
        ld = np.where(diff.sum(axis=0) > 0, ld, 0.0)
        return same @ ls + diff @ ld

    out = np.empty((same.shape[0], 2))
    for c, (base, other) in enumerate(((tau, theta), (theta, tau))):
        h = 1e-5 * base
        if c == 0:
            out[:, 0] = (per_locus(tau + h, theta) - per_locus(tau - h, theta)) / (2 * h)
        else:
            out[:, 1] = (per_locus(tau, theta + h) - per_locus(tau, theta - h)) / (2 * h)
    return out


def popgen_score_constraints(m_max: int = DEFAULT_M_MAX) -> ConstraintSet:
    """Per-locus composite score in ``(tau, theta)`` as estimating equations."""
    return ConstraintSet(partial(_score_h, m_max), 2, "popgen-composite-score")


def _simulate(genes_per_deme, theta, n, rng):
    return simulate_popgen(PopGenParams(float(theta[0]), float(theta[1])), n, genes_per_deme, rng)


def _valid(theta) -> bool:
    return bool(theta[0] > 0 and theta[1] > 0)


def popgen_plugin(genes_per_deme: int = 20, m_max: int = DEFAULT_M_MAX) -> ModelPlugin:
    return ModelPlugin(
        name="popgen",
        param_names=("tau", "theta"),
        simulate=partial(_simulate, int(genes_per_deme)),
        estimator=EstimatorPlug(partial(_estimate, int(m_max)), "mcle"),
        prior=popgen_prior(),
        plan=ResamplePlan(Scheme.IID),
        check_params=_valid,
        summaries=popgen_summaries,
        constraints=popgen_score_constraints(m_max),
    )


# --------------------------------------------------------------------------
# file format: CSV with columns locus, deme, gene_index, repeat_count
# --------------------------------------------------------------------------

def write_microsat_csv(path: str | Path, data) -> None:
    y = _as_dataset(data)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["locus", "deme", "gene_index", "repeat_count"])
        for k, dm, gi in np.ndindex(*y.shape):
            out.writerow([k, dm, gi, int(y[k, dm, gi])])


def read_microsat_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no records")
    k = np.array([int(r["locus"]) for r in rows])
    dm = np.array([int(r["deme"]) for r in rows])
    gi = np.array([int(r["gene_index"]) for r in rows])
    val = np.array([int(r["repeat_count"]) for r in rows])
    if set(dm.tolist()) - {0, 1}:
        raise ValueError(f"{path}: deme must be 0 or 1")
    loci = np.unique(k)
    g = gi.max() + 1
    out = np.full((loci.size, 2, g), np.iinfo(np.int64).min, dtype=np.int64)
    pos = np.searchsorted(loci, k)
    out[pos, dm, gi] = val
    if np.any(out == np.iinfo(np.int64).min):
        raise ValueError(f"{path}: every locus needs the same genes in both demes")
    return out
