"""Bayesian computation with bootstrap likelihood, empirical likelihood and rejection ABC."""
from .blik import BootLikCurve, CurveError, build_curve, load_curves, log_bl, save_curves
from .elik import ConstraintSet, ELResult, ELStatus, el_eval, mean_constraint
from .numkit import RngStream
from .plugin import EstimatorPlug, FitError, ModelPlugin, SimulationError
from .resample import ResamplePlan, Scheme
from .samplers import (
    AbcConfig,
    Prior,
    WeightedSample,
    abc_estimator,
    abc_reject,
    bcbl_sample,
    bcel_sample,
    importance_resample,
    posterior_summaries,
)

__version__ = "0.1.0"

__all__ = [
    "AbcConfig",
    "BootLikCurve",
    "ConstraintSet",
    "CurveError",
    "ELResult",
    "ELStatus",
    "EstimatorPlug",
    "FitError",
    "ModelPlugin",
    "Prior",
    "ResamplePlan",
    "RngStream",
    "Scheme",
    "SimulationError",
    "WeightedSample",
    "abc_estimator",
    "abc_reject",
    "bcbl_sample",
    "bcel_sample",
    "build_curve",
    "el_eval",
    "importance_resample",
    "load_curves",
    "log_bl",
    "mean_constraint",
    "posterior_summaries",
    "save_curves",
]
