"""The contract a model family implements to plug into the samplers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .elik import ConstraintSet
    from .resample import ResamplePlan
    from .samplers import Prior

__all__ = ["FitError", "SimulationError", "EstimatorPlug", "ModelPlugin"]


class FitError(RuntimeError):
    """A point estimator failed on a dataset (non-convergence, degenerate data)."""


class SimulationError(RuntimeError):
    """A simulator produced a non-finite or exploding trajectory."""


@dataclass(frozen=True)
class EstimatorPlug:
    """A point estimator ``data -> theta_hat`` with a short label.

    ``fn`` takes the dataset and an optional :class:`~bootlik.numkit.RngStream`
    (only randomised estimators such as the ABC posterior mean use it) and
    returns one value per scalar parameter. Failures raise :class:`FitError`.
    """

    fn: Callable[..., Any]
    label: str

    def __call__(self, data, rng=None) -> np.ndarray:
        est = np.atleast_1d(np.asarray(self.fn(data, rng), dtype=float))
        if not np.all(np.isfinite(est)):
            raise FitError(f"{self.label}: non-finite estimate {est}")
        return est


def _always_valid(theta) -> bool:
    return True


@dataclass(frozen=True)
class ModelPlugin:
    """Simulator, estimator, prior and bootstrap plan for one model family.

    ``simulate(theta, n, rng)`` draws a dataset of size ``n`` at ``theta``;
    ``size(data)`` returns ``n`` for a dataset. Residual-bootstrap models also
    supply ``residuals(data, theta)`` and ``rebuild(theta, innovations,
    template)``. ``summaries`` feeds rejection ABC and ``constraints`` the
    empirical likelihood sampler; either may be ``None`` when the model does
    not support that sampler.
    """

    name: str
    param_names: tuple[str, ...]
    simulate: Callable[[np.ndarray, int, Any], Any]
    estimator: EstimatorPlug
    prior: "Prior"
    plan: "ResamplePlan"
    size: Callable[[Any], int] = len
    check_params: Callable[[np.ndarray], bool] = _always_valid
    residuals: Callable[[Any, np.ndarray], np.ndarray] | None = None
    rebuild: Callable[[np.ndarray, np.ndarray, Any], Any] | None = None
    summaries: Callable[[Any], np.ndarray] | None = None
    constraints: "ConstraintSet | None" = None

    @property
    def dim(self) -> int:
        return len(self.param_names)

    def validate(self, theta: Sequence[float]) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,) or not np.all(np.isfinite(theta)) or not self.check_params(theta):
            raise ValueError(f"{self.name}: invalid parameters {theta.tolist()}")
        return theta
