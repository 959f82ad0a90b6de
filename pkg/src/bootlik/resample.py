"""Bootstrap data-generating processes.

Every scheme returns a dataset of the same kind and size as its input:
an array resampled along its first axis, a rebuilt series, a freshly
simulated dataset, or a lattice of the same shape.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from .numkit import RngStream

if TYPE_CHECKING:
    from .plugin import ModelPlugin

__all__ = [
    "Scheme",
    "ResamplePlan",
    "ResampleError",
    "resample_iid",
    "resample_pairs",
    "resample_residual",
    "resample_parametric",
    "resample_moving_block",
]


class ResampleError(RuntimeError):
    pass


class Scheme(str, enum.Enum):
    IID = "iid"
    PAIRS = "pairs"
    RESIDUAL = "residual"
    PARAMETRIC = "parametric"
    MOVING_BLOCK = "moving_block"


@dataclass(frozen=True)
class ResamplePlan:
    scheme: Scheme
    window: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.scheme is Scheme.MOVING_BLOCK:
            if self.window is None or int(self.window) < 1:
                raise ValueError("moving-block plan needs a window >= 1")
        elif self.window is not None:
            raise ValueError(f"window only applies to moving-block plans, not {self.scheme.value}")

    @classmethod
    def moving_block(cls, window: int) -> "ResamplePlan":
        return cls(Scheme.MOVING_BLOCK, int(window))


def resample_iid(data, rng: RngStream):
    """Draw ``n`` records with replacement along the first axis."""
    arr = np.asarray(data)
    n = arr.shape[0] if arr.ndim else 0
    if n == 0:
        raise ResampleError("cannot resample an empty dataset")
    idx = rng.gen.integers(0, n, size=n)
    return arr[idx]


def resample_pairs(records, rng: RngStream):
    """Pairs bootstrap: resample ``(input, response)`` rows jointly.

    Usually less accurate than residual resampling for regression-type data;
    provided for completeness.
    """
    return resample_iid(records, rng)


def resample_residual(residuals, rebuild: Callable[[np.ndarray], np.ndarray], rng: RngStream,
                      index: int | None = None) -> np.ndarray:
    """Resample residuals iid and pass them through the model's rebuild recursion."""
    res = np.asarray(residuals, dtype=float)
    shuffled = resample_iid(res, rng)
    out = np.asarray(rebuild(shuffled))
    if out.shape[0] != res.shape[0]:
        raise ResampleError("rebuild changed the series length")
    if not np.all(np.isfinite(out)):
        where = "" if index is None else f" (replicate {index})"
        raise ResampleError(f"residual rebuild diverged{where}")
    return out


def resample_parametric(model: "ModelPlugin", theta_hat, n: int, rng: RngStream):
    """Simulate a fresh size-``n`` dataset from ``model`` at ``theta_hat``."""
    if n < 1:
        raise ValueError("parametric bootstrap needs n >= 1")
    theta = model.validate(theta_hat)
    return model.simulate(theta, int(n), rng)


def resample_moving_block(lattice, window: int, rng: RngStream) -> np.ndarray:
    """Moving-block bootstrap of a 2-D lattice with square blocks.

    The output is tiled by ``ceil(M/w) * ceil(N/w)`` non-overlapping tiles;
    each tile is copied from a uniformly chosen ``w x w`` window of the
    source (any of the ``(M-w+1)(N-w+1)`` positions). Tiles on the bottom and
    right edges are truncated rather than wrapped.
    """
    x = np.asarray(lattice)
    if x.ndim != 2:
        raise ValueError("moving-block bootstrap expects a 2-D lattice")
    m, n = x.shape
    w = int(window)
    if w < 1 or w > min(m, n):
        raise ValueError(f"window {w} does not fit a {m}x{n} lattice")
    tr, tc = math.ceil(m / w), math.ceil(n / w)
    rows = rng.gen.integers(0, m - w + 1, size=tr * tc)
    cols = rng.gen.integers(0, n - w + 1, size=tr * tc)
    out = np.empty_like(x)
    k = 0
    for bi in range(tr):
        r0 = bi * w
        h = min(w, m - r0)
        for bj in range(tc):
            c0 = bj * w
            wd = min(w, n - c0)
            out[r0:r0 + h, c0:c0 + wd] = x[rows[k]:rows[k] + h, cols[k]:cols[k] + wd]
            k += 1
    return out
