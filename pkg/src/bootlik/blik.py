"""Bootstrap likelihood curves.

A curve is built by a nested bootstrap: ``K`` first-level datasets give
estimates ``theta*_i``; under each, ``L`` second-level datasets give
estimates ``theta**_ij`` whose kernel density, evaluated at the observed
estimate ``theta_hat``, is the likelihood value at ``theta*_i``. A loess-style
smoother through ``(theta*_i, log density)`` gives the whole curve.
Vector parameters get one curve per component.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .numkit import (
    DegenerateSampleError,
    KernelDensity,
    RngStream,
    Smoother,
    kde_eval,
    silverman_bandwidth,
    smooth_eval,
    smooth_fit,
)
from .plugin import EstimatorPlug, FitError, ModelPlugin, SimulationError
from .resample import (
    ResampleError,
    ResamplePlan,
    Scheme,
    resample_iid,
    resample_moving_block,
    resample_parametric,
    resample_residual,
)

__all__ = [
    "EstimatorPlug",
    "BootLikCurve",
    "CurveError",
    "OUT_OF_SUPPORT",
    "MIN_K",
    "MIN_L",
    "build_curve",
    "log_bl",
    "save_curves",
    "load_curves",
]

log = logging.getLogger(__name__)

#: Log-likelihood reported outside the curve's support; maps to weight 0.
OUT_OF_SUPPORT = float("-inf")

#: Smallest replicate counts accepted at the first and second level.
MIN_K = 10
MIN_L = 50

_RECOVERABLE = (FitError, SimulationError, ResampleError, ValueError, FloatingPointError, np.linalg.LinAlgError)


class CurveError(RuntimeError):
    pass


@dataclass
class BootLikCurve:
    label: str
    theta_star: np.ndarray
    loglik: np.ndarray
    smoother: Smoother
    theta_hat: float
    K: int
    L: int
    bandwidths: np.ndarray
    dropped: dict[str, int] = field(default_factory=dict)
    bandwidth_policy: str = "silverman"

    @property
    def support(self) -> tuple[float, float]:
        return float(self.theta_star.min()), float(self.theta_star.max())

    def log_bl(self, theta):
        """Vectorised :func:`log_bl`: ``-inf`` outside the support."""
        t = np.asarray(theta, dtype=float)
        lo, hi = self.support
        inside = (t >= lo) & (t <= hi)
        out = np.full(t.shape, OUT_OF_SUPPORT)
        if np.any(inside):
            out[inside] = smooth_eval(self.smoother, t[inside])
        return float(out) if out.ndim == 0 else out

    def grid(self, n: int = 512) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.support
        g = np.linspace(lo, hi, n)
        return g, smooth_eval(self.smoother, g)

    def argmax(self, n: int = 512) -> float:
        g, v = self.grid(n)
        return float(g[int(np.argmax(v))])

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "theta_hat": self.theta_hat,
            "K": self.K,
            "L": self.L,
            "support": list(self.support),
            "knots": {"theta_star": self.theta_star.tolist(), "loglik": self.loglik.tolist()},
            "bandwidths": self.bandwidths.tolist(),
            "smoother": {"span": self.smoother.span, "degree": self.smoother.degree},
            "bandwidth_policy": self.bandwidth_policy,
            "dropped": dict(self.dropped),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BootLikCurve":
        x = np.asarray(d["knots"]["theta_star"], dtype=float)
        y = np.asarray(d["knots"]["loglik"], dtype=float)
        sm = smooth_fit(x, y, d["smoother"]["span"], d["smoother"]["degree"])
        return cls(
            label=d["label"],
            theta_star=x,
            loglik=y,
            smoother=sm,
            theta_hat=float(d["theta_hat"]),
            K=int(d["K"]),
            L=int(d["L"]),
            bandwidths=np.asarray(d.get("bandwidths", []), dtype=float),
            dropped={k: int(v) for k, v in d.get("dropped", {}).items()},
            bandwidth_policy=d.get("bandwidth_policy", "silverman"),
        )


def log_bl(curve: BootLikCurve, theta: float) -> float:
    """Log bootstrap likelihood at ``theta``, or :data:`OUT_OF_SUPPORT`."""
    return curve.log_bl(float(theta))


def save_curves(curves: Sequence[BootLikCurve], path: str | Path) -> None:
    doc = {"curves": [c.to_dict() for c in curves]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_curves(path: str | Path) -> list[BootLikCurve]:
    doc = json.loads(Path(path).read_text())
    return [BootLikCurve.from_dict(d) for d in doc["curves"]]


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _draw(plan: ResamplePlan, model: ModelPlugin, data, theta, resid, rng: RngStream, index: int):
    scheme = plan.scheme
    if scheme in (Scheme.IID, Scheme.PAIRS):
        return resample_iid(data, rng)
    if scheme is Scheme.PARAMETRIC:
        return resample_parametric(model, theta, model.size(data), rng)
    if scheme is Scheme.MOVING_BLOCK:
        return resample_moving_block(data, plan.window, rng)
    if scheme is Scheme.RESIDUAL:
        return resample_residual(resid, lambda eps: model.rebuild(theta, eps, data), rng, index=index)
    raise ValueError(f"unknown scheme {scheme}")


def _first_level(args) -> tuple[int, np.ndarray | None, np.ndarray | None, Counter]:
    i, data, model, est, plan, L, theta_hat, resid0, rng = args
    fails: Counter = Counter()
    try:
        pop = _draw(plan, model, data, theta_hat, resid0, rng.child(0), i)
        theta_star = est(pop, rng.child(1))
        resid = model.residuals(pop, theta_star) if plan.scheme is Scheme.RESIDUAL else None
    except _RECOVERABLE as exc:
        fails[f"level1:{type(exc).__name__}"] += 1
        return i, None, None, fails

    draws = rng.child(2)
    second = []
    for j in range(L):
        try:
            sample = _draw(plan, model, pop, theta_star, resid, draws, i)
            second.append(est(sample, rng.child(3, j)))
        except _RECOVERABLE as exc:
            fails[f"level2:{type(exc).__name__}"] += 1
    out = np.asarray(second, dtype=float).reshape(len(second), theta_star.size)
    return i, theta_star, out, fails


def build_curve(
    data,
    model: ModelPlugin,
    est: EstimatorPlug | None = None,
    K: int = 100,
    L: int = 200,
    plan: ResamplePlan | None = None,
    rng: RngStream | int = 0,
    *,
    span: float = 0.75,
    degree: int = 2,
    workers: int = 1,
) -> list[BootLikCurve]:
    """Build one bootstrap likelihood curve per scalar parameter component.

    Parameters
    ----------
    data
        Observed dataset in the model's native representation.
    model
        Model plug-in; supplies the simulator (parametric plans) and the
        residual/rebuild hooks (residual plans).
    est
        Point estimator; defaults to ``model.estimator``.
    K, L
        First- and second-level replicate counts.
    plan
        Bootstrap scheme; defaults to ``model.plan``. IID and pairs plans
        resample the first-level sample at the second level, parametric
        and residual plans re-simulate at ``theta*_i``.
    rng
        Root stream. Replicate ``i`` uses the sub-stream ``(1, i)``, so
        results do not depend on ``workers``.
    span, degree
        Smoother settings.
    workers
        Process count for the first-level loop.

    Raises
    ------
    CurveError
        If fewer than ``degree + 2`` usable points remain for a component.
    FitError
        If the estimator fails on the observed data.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    est = est or model.estimator
    plan = plan or model.plan
    if K < MIN_K or L < MIN_L:
        raise ValueError(f"need K >= {MIN_K} and L >= {MIN_L}, got K={K}, L={L}")

    theta_hat = est(data, rng.child(0))
    resid0 = model.residuals(data, theta_hat) if plan.scheme is Scheme.RESIDUAL else None

    tasks = [(i, data, model, est, plan, L, theta_hat, resid0, rng.child(1, i)) for i in range(K)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_first_level, tasks, chunksize=max(1, K // (4 * workers))))
    else:
        results = [_first_level(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    fails: Counter = Counter()
    for r in results:
        fails.update(r[3])

    curves = []
    for c in range(theta_hat.size):
        label = model.param_names[c] if c < len(model.param_names) else f"theta{c}"
        xs, ys, bws = [], [], []
        dropped = Counter({k: v for k, v in fails.items() if k.startswith("level1")})
        for _, theta_star, second, _ in results:
            if theta_star is None:
                continue
            if second.shape[0] < 2:
                dropped["too_few_second_level"] += 1
                continue
            try:
                bw = silverman_bandwidth(second[:, c])
            except DegenerateSampleError:
                dropped["zero_spread"] += 1
                continue
            p = kde_eval(KernelDensity(second[:, c], bw), theta_hat[c])
            if not p > 0.0:
                dropped["zero_density"] += 1
                continue
            xs.append(theta_star[c])
            ys.append(math.log(p))
            bws.append(bw)
        if dropped:
            log.info("curve %s: dropped %s", label, dict(dropped))
        level2 = sum(v for k, v in fails.items() if k.startswith("level2"))
        if level2:
            dropped["level2_failures"] = level2
        if len(xs) < degree + 2 or (len(xs) and np.ptp(xs) <= 0):
            raise CurveError(
                f"curve {label}: only {len(xs)} usable points of K={K} "
                f"(need {degree + 2}); failures: {dict(dropped)}"
            )
        x = np.asarray(xs)
        y = np.asarray(ys)
        sm = smooth_fit(x, y, span=span, degree=degree)
        curves.append(
            BootLikCurve(
                label=label,
                theta_star=sm.x,
                loglik=sm.y,
                smoother=sm,
                theta_hat=float(theta_hat[c]),
                K=K,
                L=L,
                bandwidths=np.asarray(bws)[np.argsort(x, kind="stable")],
                dropped=dict(dropped),
            )
        )
    return curves
