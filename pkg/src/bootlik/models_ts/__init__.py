"""Normal-mean, GARCH(1,1) and SDE model plug-ins."""
from .garch import (
    GarchParams,
    garch_plugin,
    garch_priors,
    garch_quasi_loglik,
    garch_rebuild,
    garch_residuals,
    garch_score_constraints,
    qmle_garch,
    simulate_garch,
)
from .normal import estimate_normal, normal_plugin, simulate_normal
from .sde import SdeParams, SdePath, qmle_sde, sde_abc_summaries, sde_loglik, sde_plugin, simulate_sde


def read_series(path):
    """Read a single-column series CSV (one header line)."""
    import numpy as np

    with open(path) as fh:
        lines = fh.read().splitlines()
    return np.array([float(v) for v in lines[1:] if v.strip()])


def write_series(path, values, name: str = "y") -> None:
    with open(path, "w") as fh:
        fh.write(name + "\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


__all__ = [
    "GarchParams",
    "SdeParams",
    "SdePath",
    "estimate_normal",
    "garch_plugin",
    "garch_priors",
    "garch_quasi_loglik",
    "garch_rebuild",
    "garch_residuals",
    "garch_score_constraints",
    "normal_plugin",
    "qmle_garch",
    "qmle_sde",
    "read_series",
    "sde_abc_summaries",
    "sde_loglik",
    "sde_plugin",
    "simulate_garch",
    "simulate_normal",
    "simulate_sde",
    "write_series",
]
