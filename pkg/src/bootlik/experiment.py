"""Seeded end-to-end experiments: configuration, replicate runs and output files.

A run writes, under the output directory::

    config.json                 resolved configuration
    results.csv                 one row per (parameter, sampler)
    timings.json                wall-clock per sampler (kept out of results.csv)
    failures.json               replicate failures, if any
    curves/rep000.json          bootstrap likelihood curves
    samples/rep000_bcbl.csv     posterior draws
    density/bcbl_theta.csv      density-plot data from the first good replicate

Every random draw comes from ``RngStream(seed, (replicate, stage))``, so
results do not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import ising, popgen
from .blik import MIN_K, MIN_L, CurveError, build_curve, save_curves
from .elik import ELSolveError
from .models_ts import (
    GarchParams,
    SdeParams,
    SdePath,
    garch_plugin,
    normal_plugin,
    read_series,
    sde_plugin,
    simulate_garch,
    simulate_normal,
    simulate_sde,
)
from .numkit import KernelDensity, RngStream, kde_eval, silverman_bandwidth
from .plugin import FitError, ModelPlugin, SimulationError
from .samplers import (
    AbcConfig,
    SamplingError,
    abc_reject,
    bcbl_sample,
    bcel_sample,
    importance_resample,
    posterior_summaries,
    read_samples_csv,
    write_samples_csv,
)

__all__ = [
    "ConfigError",
    "RunError",
    "ExperimentConfig",
    "MODEL_DEFAULTS",
    "validate_config",
    "load_config",
    "ResultRow",
    "ResultTable",
    "run_experiment",
    "make_model",
    "simulate_dataset",
    "load_dataset",
    "emit_plotdata",
    "density_grid",
]

log = logging.getLogger(__name__)

ModelId = Literal["normal", "garch", "sde", "popgen", "ising"]
SamplerId = Literal["bcbl", "bcel", "abc"]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message lists every problem by path."""


class RunError(RuntimeError):
    """An experiment could not produce results."""


#: Per-model defaults; ``R`` is the desk-scale replicate count and ``R_paper``
#: the count restored by ``paper_scale``.
MODEL_DEFAULTS: dict[str, dict[str, Any]] = {
    "normal": dict(samplers=["bcbl", "bcel", "abc"], truth=[0.0], n=50, K=100, L=200, M=200, N=1000,
                   R=10, R_paper=50, abc_budget=20000, quantile=0.01),
    "garch": dict(samplers=["bcbl", "bcel"], truth=[0.1, 0.15, 0.5], n=300, K=100, L=1000, M=20000,
                  N=1000, R=10, R_paper=50, abc_budget=5000, quantile=0.01),
    "sde": dict(samplers=["bcbl", "abc"], truth=[0.2, 0.3], n=750, K=100, L=200, M=5000, N=1000,
                R=10, R_paper=50, abc_budget=5000, quantile=0.1, dt=0.1),
    "popgen": dict(samplers=["bcbl", "bcel"], truth=[0.5, 10.0], n=50, K=100, L=200, M=30000, N=1000,
                   R=10, R_paper=20, abc_budget=5000, quantile=0.01, m_max=popgen.DEFAULT_M_MAX,
                   genes_per_deme=20),
    "ising": dict(samplers=["bcbl", "abc"], truth=[0.5], n=25, K=100, L=200, M=5000, N=1000,
                  R=10, R_paper=20, abc_budget=20000, quantile=0.01, window=5, cycles=ising.DEFAULT_CYCLES),
}

_NO_BCEL = {"sde", "ising"}


class ExperimentConfig(BaseModel):
    """One experiment. Unset fields take the per-model defaults.

    ``n`` is the dataset size: observations for ``normal``, ``garch`` and
    ``sde``, loci for ``popgen`` and the lattice side for ``ising``.
    ``data`` is ``"simulate"`` or a path to a data file in the model's format.
    """

    model_config = ConfigDict(extra="forbid")

    model: ModelId
    samplers: Optional[list[SamplerId]] = None
    truth: Optional[list[float]] = None
    data: str = "simulate"
    n: Optional[int] = Field(None, ge=2)
    K: Optional[int] = Field(None, ge=MIN_K)
    L: Optional[int] = Field(None, ge=MIN_L)
    M: Optional[int] = Field(None, ge=1)
    N: Optional[int] = Field(None, ge=1)
    R: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    window: Optional[int] = Field(None, ge=1)
    dt: Optional[float] = Field(None, gt=0)
    m_max: Optional[int] = Field(None, ge=1)
    genes_per_deme: Optional[int] = Field(None, ge=1)
    cycles: Optional[int] = Field(None, ge=1)
    quantile: Optional[float] = Field(None, gt=0, le=1)
    epsilon: Optional[float] = Field(None, ge=0)
    abc_budget: Optional[int] = Field(None, ge=1)
    span: float = Field(0.75, gt=0, le=1)
    degree: int = Field(2, ge=0, le=2)
    workers: int = Field(1, ge=1)
    paper_scale: bool = False
    output: str = "results"

    @model_validator(mode="after")
    def _fill_and_check(self) -> "ExperimentConfig":
        d = MODEL_DEFAULTS[self.model]
        for key in ("samplers", "truth", "n", "K", "L", "M", "N", "abc_budget"):
            if getattr(self, key) is None:
                setattr(self, key, list(d[key]) if isinstance(d[key], list) else d[key])
        if self.R is None:
            self.R = d["R_paper"] if self.paper_scale else d["R"]
        if self.quantile is None and self.epsilon is None:
            self.quantile = d["quantile"]
        elif self.quantile is not None and self.epsilon is not None:
            raise ValueError("quantile and epsilon are mutually exclusive")
        for key in ("dt", "m_max", "genes_per_deme", "window", "cycles"):
            if key in d and getattr(self, key) is None:
                setattr(self, key, d[key])
        if self.seed is None:
            self.seed = int(np.random.SeedSequence().entropy % (2**63))
        if not self.samplers:
            raise ValueError("samplers: at least one sampler is required")
        if len(set(self.samplers)) != len(self.samplers):
            raise ValueError("samplers: duplicates are not allowed")
        if self.model in _NO_BCEL and "bcel" in self.samplers:
            raise ValueError(f"samplers: bcel is not available for model {self.model!r}")
        dim = len(d["truth"])
        if len(self.truth) != dim:
            raise ValueError(f"truth: model {self.model!r} has {dim} parameter(s), got {len(self.truth)}")
        make_model(self).validate(self.truth)
        if self.model == "ising" and self.window > self.n:
            raise ValueError(f"window: {self.window} exceeds the {self.n}x{self.n} lattice")
        if self.model == "garch" and self.n < 50:
            raise ValueError("n: garch needs at least 50 observations")
        if self.model == "sde" and self.n < 100:
            raise ValueError("n: sde needs at least 100 observations")
        if self.model == "popgen" and self.n < 10:
            raise ValueError("n: popgen needs at least 10 loci")
        if self.degree + 2 > self.K:
            raise ValueError("degree: too large for K")
        return self

    def resolved(self) -> dict[str, Any]:
        return self.model_dump()


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        if err["type"] in ("greater_than_equal",) and err["loc"] and err["loc"][-1] in ("K", "L"):
            msg += " (bootstrap likelihood minimum)"
        lines.append(f"{path}: {msg}" if path else msg)
    return "; ".join(lines)


def validate_config(text: str, **overrides) -> ExperimentConfig:
    """Parse a JSON configuration, apply overrides and fill defaults.

    Raises
    ------
    ConfigError
        With a path-qualified message for every problem found.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    return validate_config(Path(path).read_text(), **overrides)


# --------------------------------------------------------------------------
# models and data
# --------------------------------------------------------------------------

def make_model(cfg: ExperimentConfig) -> ModelPlugin:
    if cfg.model == "normal":
        return normal_plugin()
    if cfg.model == "garch":
        return garch_plugin()
    if cfg.model == "sde":
        return sde_plugin(cfg.dt)
    if cfg.model == "popgen":
        return popgen.popgen_plugin(cfg.genes_per_deme, cfg.m_max)
    return ising.ising_plugin((cfg.n, cfg.n), cfg.window, cfg.cycles)


def simulate_dataset(model: str, truth, n: int, rng: RngStream, *, dt: float = 0.1,
                     genes_per_deme: int = 20, cycles: int = ising.DEFAULT_CYCLES):
    t = [float(v) for v in truth]
    if model == "normal":
        return simulate_normal(t[0], n, rng)
    if model == "garch":
        return simulate_garch(GarchParams(*t), n, rng)
    if model == "sde":
        return simulate_sde(SdeParams(*t), n, dt, rng)
    if model == "popgen":
        return popgen.simulate_popgen(popgen.PopGenParams(*t), n, genes_per_deme, rng)
    if model == "ising":
        return ising.gibbs_simulate(t[0], n, n, cycles, rng)
    raise ValueError(f"unknown model {model!r}")


def load_dataset(model: str, path: str | Path, dt: float = 0.1):
    if model in ("normal", "garch"):
        return read_series(path)
    if model == "sde":
        return SdePath.load(path, dt)
    if model == "popgen":
        return popgen.read_microsat_csv(path)
    if model == "ising":
        return ising.read_lattice(path)
    raise ValueError(f"unknown model {model!r}")


def write_dataset(model: str, data, path: str | Path) -> None:
    from .models_ts import write_series

    if model in ("normal", "garch"):
        write_series(path, data)
    elif model == "sde":
        data.save(path)
    elif model == "popgen":
        popgen.write_microsat_csv(path, data)
    else:
        ising.write_lattice(path, data)


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class ResultRow:
    parameter: str
    truth: float
    sampler: str
    posterior_mean: float
    mse: float
    replicates: int


@dataclass
class ResultTable:
    rows: list[ResultRow]
    R: int
    wall_clock: dict[str, float] = field(default_factory=dict)
    failures: list[dict[str, Any]] = field(default_factory=list)

    COLUMNS = ("parameter", "truth", "sampler", "posterior_mean", "mse", "replicates")

    def row(self, parameter: str, sampler: str) -> ResultRow:
        for r in self.rows:
            if r.parameter == parameter and r.sampler == sampler:
                return r
        raise KeyError((parameter, sampler))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(self.COLUMNS)
            for r in self.rows:
                out.writerow([r.parameter, repr(r.truth), r.sampler, repr(r.posterior_mean), repr(r.mse), r.replicates])

    @classmethod
    def read_csv(cls, path: str | Path) -> "ResultTable":
        with open(path, newline="") as fh:
            recs = list(csv.DictReader(fh))
        rows = [ResultRow(r["parameter"], float(r["truth"]), r["sampler"], float(r["posterior_mean"]),
                          float(r["mse"]), int(r["replicates"])) for r in recs]
        return cls(rows, max((r.replicates for r in rows), default=0))

    def format(self) -> str:
        lines = [f"{'parameter':<10} {'truth':>9} {'sampler':<6} {'mean':>11} {'(MSE)':>13}"]
        for r in self.rows:
            lines.append(f"{r.parameter:<10} {r.truth:>9.5g} {r.sampler:<6} {r.posterior_mean:>11.5f} ({r.mse:.5f})")
        return "\n".join(lines)


_SOFT_ERRORS = (FitError, CurveError, SamplingError, SimulationError, ELSolveError, ValueError, FloatingPointError)


def _run_replicate(args) -> dict[str, Any]:
    cfg, r, base, inner = args
    root = RngStream(cfg.seed, (r,))
    model = make_model(cfg)
    out: dict[str, Any] = {"r": r, "samples": {}, "curves": None, "failures": [], "time": {}}
    try:
        if base is None:
            data = simulate_dataset(cfg.model, cfg.truth, cfg.n, root.child(0), dt=cfg.dt or 0.1,
                                    genes_per_deme=cfg.genes_per_deme or 20, cycles=cfg.cycles or 1)
        else:
            data = base
    except _SOFT_ERRORS as exc:
        out["failures"].append({"replicate": r, "stage": "data", "error": f"{type(exc).__name__}: {exc}"})
        return out

    prior = model.prior
    for sampler in cfg.samplers:
        t0 = time.perf_counter()
        try:
            if sampler == "bcbl":
                curves = build_curve(data, model, K=cfg.K, L=cfg.L, rng=root.child(1),
                                     span=cfg.span, degree=cfg.degree, workers=inner)
                out["curves"] = [c.to_dict() for c in curves]
                ws = bcbl_sample(curves, prior, cfg.M, root.child(2))
                draws = importance_resample(ws, cfg.N, root.child(3))
            elif sampler == "bcel":
                ws = bcel_sample(data, prior, model.constraints, cfg.M, root.child(4))
                draws = importance_resample(ws, cfg.N, root.child(5))
            else:
                abc = AbcConfig(budget=cfg.abc_budget, epsilon=cfg.epsilon, quantile=cfg.quantile,
                                scale="mad" if cfg.model in ("sde", "popgen", "garch") else None)
                draws = abc_reject(data, model, prior, abc, root.child(6)).draws
        except _SOFT_ERRORS as exc:
            out["failures"].append({"replicate": r, "stage": sampler, "error": f"{type(exc).__name__}: {exc}"})
            log.warning("replicate %d %s failed: %s", r, sampler, exc)
            continue
        finally:
            out["time"][sampler] = time.perf_counter() - t0
        out["samples"][sampler] = draws
    return out


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run ``cfg.R`` replicates of every configured sampler and aggregate.

    A replicate-sampler pair that fails is recorded and excluded; if more than
    half of the replicates fail for any sampler the run raises
    :class:`RunError` (after writing what it has).
    """
    model = make_model(cfg)
    names = model.param_names
    truth = np.asarray(cfg.truth, dtype=float)
    base = None if cfg.data == "simulate" else load_dataset(cfg.model, cfg.data, cfg.dt or 0.1)

    pooled = cfg.workers > 1 and cfg.R > 1
    tasks = [(cfg, r, base, 1 if pooled else cfg.workers) for r in range(cfg.R)]
    if pooled:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reps = list(pool.map(_run_replicate, tasks))
    else:
        reps = [_run_replicate(t) for t in tasks]

    outdir = Path(cfg.output)
    if write:
        for sub in ("curves", "samples", "density"):
            (outdir / sub).mkdir(parents=True, exist_ok=True)
        (outdir / "config.json").write_text(json.dumps(cfg.resolved(), indent=1, sort_keys=True) + "\n")

    failures = [f for rep in reps for f in rep["failures"]]
    wall: dict[str, float] = {s: 0.0 for s in cfg.samplers}
    means: dict[str, list[np.ndarray]] = {s: [] for s in cfg.samplers}
    first: dict[str, np.ndarray] = {}
    for rep in reps:
        for s, t in rep["time"].items():
            wall[s] += t
        if write and rep["curves"] is not None:
            Path(outdir / "curves" / f"rep{rep['r']:03d}.json").write_text(
                json.dumps({"curves": rep["curves"]}, indent=1, sort_keys=True) + "\n")
        for s, draws in rep["samples"].items():
            means[s].append(posterior_summaries(draws, truth).mean)
            first.setdefault(s, draws)
            if write:
                write_samples_csv(outdir / "samples" / f"rep{rep['r']:03d}_{s}.csv", draws, names)

    rows = []
    for c, name in enumerate(names):
        for s in cfg.samplers:
            if not means[s]:
                continue
            pm = np.array([m[c] for m in means[s]])
            rows.append(ResultRow(name, float(truth[c]), s, float(pm.mean()),
                                  float(np.mean((pm - truth[c]) ** 2)), int(pm.size)))
    table = ResultTable(rows, cfg.R, wall, failures)

    if write:
        table.write_csv(outdir / "results.csv")
        (outdir / "timings.json").write_text(json.dumps(wall, indent=1, sort_keys=True) + "\n")
        if failures:
            (outdir / "failures.json").write_text(json.dumps(failures, indent=1) + "\n")
        for s, draws in first.items():
            for c, name in enumerate(names):
                x, d = density_grid(draws[:, c])
                _write_density(outdir / "density" / f"{s}_{name}.csv", x, d)

    for s in cfg.samplers:
        bad = cfg.R - len(means[s])
        if bad * 2 > cfg.R:
            raise RunError(f"{s}: {bad} of {cfg.R} replicates failed; first error: "
                           f"{next((f['error'] for f in failures if f['stage'] in (s, 'data')), '?')}")
    return table


# --------------------------------------------------------------------------
# density plot data
# --------------------------------------------------------------------------

def density_grid(samples, weights=None, n_grid: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE on ``n_grid`` points spanning the sample range +/- 3 bandwidths.

    Samples with no spread give a single spike: a grid centred on the value
    with the full mass in the middle cell.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if np.ptp(x) == 0.0:
        step = 1e-3 * max(1.0, abs(x[0]))
        g = x[0] + step * (np.arange(n_grid) - n_grid // 2)
        d = np.zeros(n_grid)
        d[n_grid // 2] = 1.0 / step
        return g, d
    bw = silverman_bandwidth(x)
    g = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, n_grid)
    return g, kde_eval(KernelDensity(x, bw), g, weights=weights)


def _write_density(path: Path, x: np.ndarray, d: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "density"])
        for a, b in zip(x, d):
            out.writerow([repr(float(a)), repr(float(b))])


def read_density(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1]


def emit_plotdata(samples_csv: str | Path, outdir: str | Path | None = None, n_grid: int = 256) -> list[Path]:
    """Write one ``x,density`` CSV per parameter of a posterior-samples file."""
    draws, weights, names = read_samples_csv(samples_csv)
    src = Path(samples_csv)
    outdir = Path(outdir) if outdir is not None else src.parent
    outdir.mkdir(parents=True, exist_ok=True)
    w = None if np.all(weights == weights[0]) else weights
    paths = []
    for c, name in enumerate(names):
        x, d = density_grid(draws[:, c], w, n_grid)
        p = outdir / f"{src.stem}_{name}_density.csv"
        _write_density(p, x, d)
        paths.append(p)
    return paths
