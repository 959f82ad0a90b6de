"""The SDE ``dX = (2 - theta2 X) dt + (1 + X^2)^theta1 dW`` with ``X_0 = 1``."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from ..numkit import RngStream
from ..plugin import EstimatorPlug, FitError, ModelPlugin, SimulationError
from ..resample import ResamplePlan, Scheme
from ..samplers import uniform_prior
from ._kernels import euler_path

__all__ = [
    "SdeParams",
    "SdePath",
    "simulate_sde",
    "sde_loglik",
    "qmle_sde",
    "sde_abc_summaries",
    "sde_plugin",
    "DEFAULT_DT",
]

DEFAULT_DT = 0.1
EXPLOSION_BOUND = 1e6


@dataclass(frozen=True)
class SdeParams:
    theta1: float
    theta2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta1 <= 1.0 and 0.0 <= self.theta2 <= 1.0):
            raise ValueError(f"SDE parameters must lie in [0, 1]^2, got ({self.theta1}, {self.theta2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2])


@dataclass(frozen=True)
class SdePath:
    """Observed path ``X_0 = x0, X_1, ..., X_{n-1}`` on a grid of step ``dt``."""

    values: np.ndarray
    dt: float

    def __len__(self) -> int:
        return self.values.size

    def save(self, path: str | Path) -> None:
        lines = [f"x dt={self.dt!r}"] + [repr(float(v)) for v in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path, dt: float | None = None) -> "SdePath":
        text = Path(path).read_text().splitlines()
        m = re.search(r"dt=([0-9.eE+-]+)", text[0])
        if m is None and dt is None:
            raise ValueError(f"{path}: header carries no dt and none was given")
        step = float(m.group(1)) if m else float(dt)
        return cls(np.array([float(v) for v in text[1:] if v.strip()]), step)


def simulate_sde(p: SdeParams, n: int, dt: float, rng: RngStream, *, noise=None, x0: float = 1.0) -> SdePath:
    """Euler-Maruyama path with ``n`` points (``n - 1`` steps) from ``x0``.

    ``noise`` overrides the standard normal increments ``Z_k``; the step is
    ``X_{k+1} = X_k + (2 - theta2 X_k) dt + (1 + X_k^2)^theta1 sqrt(dt) Z_k``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n < 2:
        raise ValueError("need at least two points")
    z = rng.gen.standard_normal(n - 1) if noise is None else np.asarray(noise, dtype=float)
    if z.size != n - 1:
        raise ValueError(f"need {n - 1} increments, got {z.size}")
    x, ok = euler_path(float(p.theta1), float(p.theta2), float(x0), float(dt), z, EXPLOSION_BOUND)
    if not ok:
        raise SimulationError(f"SDE path exploded at step {x.size - 1}")
    return SdePath(x, float(dt))


def _pieces(path: SdePath):
    x = path.values
    xk = x[:-1]
    return xk, x[1:] - xk - 2.0 * path.dt, np.log1p(xk * xk)


def sde_loglik(theta, path: SdePath) -> float:
    """Gaussian Euler transition log-likelihood of the path."""
    t1, t2 = (float(v) for v in theta)
    xk, r0, g = _pieces(path)
    dt = path.dt
    r = r0 + t2 * xk * dt
    logv = 2.0 * t1 * g + np.log(dt)
    return float(-0.5 * np.sum(np.log(2 * np.pi) + logv + r * r * np.exp(-logv)))


def _nll(theta, xk, r0, g, dt):
    t1, t2 = theta
    r = r0 + t2 * xk * dt
    inv_v = np.exp(-2.0 * t1 * g) / dt
    rv = r * r * inv_v
    n = xk.size
    # constant log(2 pi dt) terms dropped
    f = 0.5 * np.sum(2.0 * t1 * g + rv) / n
    grad = np.array([np.sum(g * (1.0 - rv)), np.sum(r * xk * dt * inv_v)]) / n
    return f, grad


def qmle_sde(path: SdePath) -> SdeParams:
    """Bounded quasi-Newton maximisation of the Euler likelihood on ``[0, 1]^2``."""
    if len(path) < 100:
        raise FitError("SDE quasi-MLE needs at least 100 points")
    if not np.all(np.isfinite(path.values)):
        raise FitError("non-finite path")
    xk, r0, g = _pieces(path)
    res = minimize(_nll, np.array([0.5, 0.5]), args=(xk, r0, g, path.dt), jac=True,
                   method="L-BFGS-B", bounds=[(0.0, 1.0), (0.0, 1.0)],
                   options={"gtol": 1e-8, "ftol": 1e-13, "maxiter": 200})
    ok = np.all(np.isfinite(res.x)) and np.isfinite(res.fun)
    if ok and not res.success:
        # line-search stalls at the optimum; accept a flat projected gradient
        x, gr = res.x, res.jac
        proj = np.where(((x <= 0.0) & (gr > 0)) | ((x >= 1.0) & (gr < 0)), 0.0, gr)
        ok = np.max(np.abs(proj)) < 1e-5
    if not ok:
        raise FitError(f"SDE quasi-MLE did not converge: {res.message}")
    t1, t2 = np.clip(res.x, 0.0, 1.0)
    return SdeParams(float(t1), float(t2))


def _estimate(path, rng=None) -> np.ndarray:
    return qmle_sde(path).as_array()


def sde_abc_summaries(path) -> np.ndarray:
    """Mean, variance and mean absolute deviation of the path values."""
    x = path.values if isinstance(path, SdePath) else np.asarray(path, dtype=float)
    m = x.mean()
    var = x.var(ddof=1) if x.size > 1 else 0.0
    return np.array([m, var, np.mean(np.abs(x - m))])


def _valid(theta) -> bool:
    return bool(np.all((theta >= 0.0) & (theta <= 1.0)))


def _simulate(dt, theta, n, rng):
    return simulate_sde(SdeParams(*(float(v) for v in theta)), n, dt, rng)


def sde_plugin(dt: float = DEFAULT_DT) -> ModelPlugin:
    return ModelPlugin(
        name="sde",
        param_names=("theta1", "theta2"),
        simulate=partial(_simulate, float(dt)),
        estimator=EstimatorPlug(_estimate, "qmle"),
        prior=uniform_prior(("theta1", "theta2"), [0.0, 0.0], [1.0, 1.0]),
        plan=ResamplePlan(Scheme.PARAMETRIC),
        check_params=_valid,
        summaries=sde_abc_summaries,
    )
