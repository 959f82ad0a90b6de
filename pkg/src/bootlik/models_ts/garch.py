"""GARCH(1,1) with Gaussian innovations.

``y_t = sigma_t eps_t``, ``sigma_t^2 = a0 + a1 y_{t-1}^2 + b1 sigma_{t-1}^2``
with ``a0, a1, b1 > 0`` and ``a1 + b1 < 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from ..elik import ConstraintSet
from ..numkit import RngStream
from ..plugin import EstimatorPlug, FitError, ModelPlugin
from ..resample import ResamplePlan, Scheme
from ..samplers import Prior
from ._kernels import garch_path, garch_qml_grad

__all__ = [
    "GarchParams",
    "simulate_garch",
    "garch_filter",
    "garch_quasi_loglik",
    "qmle_garch",
    "GarchFit",
    "garch_residuals",
    "garch_rebuild",
    "garch_priors",
    "garch_score_constraints",
    "garch_summaries",
    "garch_plugin",
]

BURN_IN = 200


@dataclass(frozen=True)
class GarchParams:
    a0: float
    a1: float
    b1: float

    def __post_init__(self) -> None:
        if not (self.a0 > 0 and self.a1 > 0 and self.b1 > 0 and self.a1 + self.b1 < 1):
            raise ValueError(f"invalid GARCH(1,1) parameters {self.as_array().tolist()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.b1])

    @classmethod
    def from_array(cls, theta) -> "GarchParams":
        a0, a1, b1 = (float(v) for v in np.asarray(theta, dtype=float).ravel())
        return cls(a0, a1, b1)

    @property
    def stationary_variance(self) -> float:
        return self.a0 / (1.0 - self.a1 - self.b1)


def _valid(theta) -> bool:
    a0, a1, b1 = theta
    return a0 > 0 and a1 > 0 and b1 > 0 and a1 + b1 < 1


def simulate_garch(p: GarchParams, T: int, rng: RngStream, innovations=None) -> np.ndarray:
    """Simulate ``T`` observations after a 200-step burn-in.

    The recursion starts from the stationary variance. ``innovations``
    (length ``T + 200``) overrides the Gaussian draws.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if innovations is None:
        eps = rng.gen.standard_normal(T + BURN_IN)
    else:
        eps = np.asarray(innovations, dtype=float)
        if eps.size != T + BURN_IN:
            raise ValueError(f"need {T + BURN_IN} innovations, got {eps.size}")
    y = garch_path(p.a0, p.a1, p.b1, eps, p.stationary_variance)
    return y[BURN_IN:]


def _initial_variance(y: np.ndarray) -> float:
    return float(np.mean(y * y))


def garch_filter(theta, y: np.ndarray, derivatives: bool = False):
    """Conditional variances ``sigma_t^2`` given the observed series.

    ``sigma_1^2`` is the mean of ``y^2`` (held fixed, so its derivative is
    zero). With ``derivatives`` also returns ``d sigma^2 / d theta`` as a
    ``(T, 3)`` array.
    """
    a0, a1, b1 = theta
    y2 = y * y
    v0 = _initial_variance(y)
    x = np.empty_like(y2)
    x[0] = v0
    x[1:] = a0 + a1 * y2[:-1]
    ab = [1.0, -b1]
    s2 = lfilter([1.0], ab, x)
    if not derivatives:
        return s2
    d = np.empty((y.size, 3))
    u = np.zeros_like(y2)
    u[1:] = 1.0
    d[:, 0] = lfilter([1.0], ab, u)
    u[1:] = y2[:-1]
    d[:, 1] = lfilter([1.0], ab, u)
    u[1:] = s2[:-1]
    d[:, 2] = lfilter([1.0], ab, u)
    return s2, d


def garch_quasi_loglik(theta, y) -> float:
    """``sum_t [-log(sigma_t^2)/2 - y_t^2 / (2 sigma_t^2)]``."""
    y = np.asarray(y, dtype=float)
    s2 = garch_filter(np.asarray(theta, dtype=float), y)
    if np.any(s2 <= 0):
        return -np.inf
    return float(-0.5 * np.sum(np.log(s2) + y * y / s2))


def _unpack(u):
    a0 = np.exp(u[0])
    ea, eb = np.exp(u[1]), np.exp(u[2])
    den = 1.0 + ea + eb
    return a0, ea / den, eb / den


def _objective(u, y):
    a0, a1, b1 = _unpack(u)
    f, g0, g1, g2 = garch_qml_grad(a0, a1, b1, y)
    if not np.isfinite(f):
        return np.inf, np.zeros(3)
    # chain rule through (log a0, softmax)
    return f, np.array([
        g0 * a0,
        g1 * a1 * (1 - a1) - g2 * a1 * b1,
        -g1 * a1 * b1 + g2 * b1 * (1 - b1),
    ])


@dataclass
class GarchFit:
    params: GarchParams
    residuals: np.ndarray
    loglik: float
    iterations: int


def qmle_garch(series, start=None) -> GarchFit:
    """Gaussian quasi-maximum likelihood by limited-memory BFGS.

    The optimiser works on ``(log a0, a, b)`` with ``(a1, b1, 1-a1-b1)`` the
    softmax of ``(a, b, 0)``, so every iterate is a valid GARCH(1,1).
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < 50:
        raise FitError("GARCH quasi-MLE needs a series of at least 50 observations")
    if not np.all(np.isfinite(y)) or np.ptp(y) == 0.0:
        raise FitError("degenerate series")
    v = _initial_variance(y)
    a1, b1 = (0.1, 0.6) if start is None else start[1:]
    a0 = v * (1 - a1 - b1) if start is None else start[0]
    gam = 1.0 - a1 - b1
    u0 = np.array([np.log(a0), np.log(a1 / gam), np.log(b1 / gam)])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = minimize(_objective, u0, args=(y,), jac=True, method="L-BFGS-B",
                       options={"gtol": 1e-8, "ftol": 1e-13, "maxiter": 300})
    ok = np.all(np.isfinite(res.x)) and np.isfinite(res.fun)
    if ok and not res.success:
        # precision loss near the optimum is common; accept a flat gradient
        ok = np.max(np.abs(res.jac)) < 1e-5
    if not ok:
        raise FitError(f"GARCH quasi-MLE did not converge: {res.message}")
    a0, a1, b1 = _unpack(res.x)
    try:
        params = GarchParams(float(a0), float(a1), float(b1))
    except ValueError as exc:
        raise FitError(str(exc)) from None
    s2 = garch_filter((a0, a1, b1), y)
    return GarchFit(params, y / np.sqrt(s2), -res.fun * y.size, int(res.nit))


def _estimate(series, rng=None) -> np.ndarray:
    return qmle_garch(series).params.as_array()


def garch_residuals(series, theta) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    return y / np.sqrt(garch_filter(np.asarray(theta, dtype=float), y))


def garch_rebuild(theta, innovations, template) -> np.ndarray:
    """Run the GARCH recursion on ``innovations``.

    The first conditional variance is taken from ``template`` exactly as the
    quasi-likelihood filter does, so rebuilding with the unshuffled residuals
    of a fit reproduces the fitted series.
    """
    a0, a1, b1 = (float(v) for v in theta)
    v0 = _initial_variance(np.asarray(template, dtype=float))
    return garch_path(a0, a1, b1, np.asarray(innovations, dtype=float), v0)


def _prior_draw(m, gen):
    a0 = gen.exponential(1.0, size=m)
    w = gen.dirichlet([1.0, 1.0, 1.0], size=m)
    return np.column_stack([a0, w[:, 0], w[:, 1]])


def garch_priors() -> Prior:
    """``a0 ~ Exp(1)`` and ``(a1, b1, 1 - a1 - b1) ~ Dirichlet(1, 1, 1)``."""
    return Prior(_prior_draw, ("alpha0", "alpha1", "beta1"),
                 label="Exp(1) x Dirichlet(1,1,1)",
                 support="alpha0 > 0, alpha1 > 0, beta1 > 0, alpha1 + beta1 < 1")


def _score_h(y, theta):
    y = np.asarray(y, dtype=float)
    if not _valid(theta):
        return np.full((y.size - 1, 3), np.nan)
    s2, d = garch_filter(theta, y, derivatives=True)
    g = 0.5 * (y * y / s2 - 1.0) / s2
    return (g[:, None] * d)[1:]


#: Per-observation score of the Gaussian quasi-likelihood; its mean is zero at
#: the true parameters.
garch_score_constraints = ConstraintSet(_score_h, 3, "garch-qml-score")


def garch_summaries(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    y2 = y * y
    c = y2 - y2.mean()
    den = np.dot(c, c)
    acf1 = np.dot(c[1:], c[:-1]) / den if den > 0 else 0.0
    kurt = np.mean(y**4) / y2.mean() ** 2 if y2.mean() > 0 else 0.0
    return np.array([np.log(y2.mean() + 1e-300), acf1, kurt])


def _simulate(theta, n, rng):
    return simulate_garch(GarchParams.from_array(theta), n, rng)


def garch_plugin() -> ModelPlugin:
    return ModelPlugin(
        name="garch",
        param_names=("alpha0", "alpha1", "beta1"),
        simulate=_simulate,
        estimator=EstimatorPlug(_estimate, "qmle"),
        prior=garch_priors(),
        plan=ResamplePlan(Scheme.RESIDUAL),
        check_params=_valid,
        residuals=garch_residuals,
        rebuild=garch_rebuild,
        summaries=garch_summaries,
        constraints=garch_score_constraints,
    )
