"""Normal mean with known unit variance: the toy model."""
from __future__ import annotations

from functools import partial

import numpy as np

from ..elik import mean_constraint
from ..numkit import RngStream
from ..plugin import EstimatorPlug, FitError, ModelPlugin
from ..resample import ResamplePlan, Scheme
from ..samplers import uniform_prior

__all__ = ["simulate_normal", "estimate_normal", "normal_plugin", "NORMAL_PRIOR_BOUNDS"]

#: Flat prior on the mean; wide enough to hold N(ybar, 1/n) for small |mu|.
NORMAL_PRIOR_BOUNDS = (-1.0, 1.0)


def simulate_normal(mu, n: int, rng: RngStream) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    mu = float(np.asarray(mu, dtype=float).ravel()[0])
    return mu + rng.gen.standard_normal(int(n))


def estimate_normal(sample, rng=None) -> float:
    y = np.asarray(sample, dtype=float)
    if y.size == 0:
        raise FitError("empty sample")
    return float(y.mean())


def _simulate(theta, n, rng):
    return simulate_normal(theta[0], n, rng)


def _summaries(y):
    return np.array([np.mean(y)])


def normal_plugin(prior_bounds: tuple[float, float] = NORMAL_PRIOR_BOUNDS) -> ModelPlugin:
    return ModelPlugin(
        name="normal",
        param_names=("mu",),
        simulate=_simulate,
        estimator=EstimatorPlug(estimate_normal, "sample-mean"),
        prior=uniform_prior(("mu",), [prior_bounds[0]], [prior_bounds[1]]),
        plan=ResamplePlan(Scheme.IID),
        summaries=_summaries,
        constraints=mean_constraint,
    )
