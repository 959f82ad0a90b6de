"""Empirical likelihood via the dual Newton method.

The profile ``max prod p_i`` subject to ``sum p_i = 1`` and
``sum p_i h(y_i; theta) = 0`` has the solution
``p_i = 1 / (n (1 + lambda' h_i))`` where ``lambda`` maximises the concave
dual ``sum log(1 + lambda' h_i)``. The log is replaced below ``1/n`` by its
quadratic extension (Owen's pseudo-logarithm) so Newton steps stay defined
everywhere; a solution that needs the extension means zero lies outside the
convex hull of the ``h_i``. Outside the hull the dual is unbounded; a Newton
iterate with ``lambda' h_i >= 0`` for all ``i`` certifies that case early.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["ConstraintSet", "ELStatus", "ELResult", "ELSolveError", "el_eval", "mean_constraint"]


class ELSolveError(RuntimeError):
    """Newton iterations broke down (singular Hessian or no progress)."""


class ELStatus(str, enum.Enum):
    CONVERGED = "converged"
    HULL_VIOLATION = "hull_violation"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class ConstraintSet:
    """Estimating function ``h(data, theta) -> (n, q)`` array."""

    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    q: int
    label: str = ""

    def __call__(self, data, theta) -> np.ndarray:
        out = np.asarray(self.h(data, np.atleast_1d(np.asarray(theta, dtype=float))), dtype=float)
        return out.reshape(out.shape[0], self.q)


def _mean_h(y, theta):
    return np.asarray(y, dtype=float).reshape(-1, 1) - theta[0]


#: ``h(y, theta) = y - theta``; the empirical likelihood of a mean.
mean_constraint = ConstraintSet(_mean_h, 1, "mean")


@dataclass
class ELResult:
    log_el: float
    weights: np.ndarray
    lam: np.ndarray
    converged: bool
    status: ELStatus
    iterations: int

    @property
    def el(self) -> float:
        return math.exp(self.log_el) if self.log_el > -math.inf else 0.0


def _pseudo_log(z: np.ndarray, eps: float):
    """Value, first and second derivative of the pseudo-logarithm."""
    lo = z < eps
    val = np.empty_like(z)
    d1 = np.empty_like(z)
    d2 = np.empty_like(z)
    zi = z[~lo]
    val[~lo] = np.log(zi)
    d1[~lo] = 1.0 / zi
    d2[~lo] = -1.0 / (zi * zi)
    r = z[lo] / eps
    val[lo] = math.log(eps) - 1.5 + 2.0 * r - 0.5 * r * r
    d1[lo] = (2.0 - r) / eps
    d2[lo] = -1.0 / (eps * eps)
    return val, d1, d2


def _polish(h, lam, z, f, grad, d2, eps):
    """One extra full Newton step; near the optimum it takes the residual to round-off."""
    try:
        step = np.linalg.solve((h * d2[:, None]).T @ h, -grad)
    except np.linalg.LinAlgError:
        return lam, z, f
    lam_new = lam + step
    z_new = 1.0 + h @ lam_new
    if np.all(z_new >= eps):
        f_new = float(np.log(z_new).sum())
        if f_new >= f - 1e-12 * abs(f):
            return lam_new, z_new, f_new
    return lam, z, f


def el_eval(data, theta, constraints: ConstraintSet = mean_constraint, *,
            tol: float = 1e-9, max_iter: int = 100) -> ELResult:
    """Empirical likelihood of ``theta``.

    Returns ``log prod p_i``. When zero is not inside the convex hull of the
    estimating-function values the result carries ``log_el = -inf`` and
    status ``HULL_VIOLATION``; that is an ordinary outcome (weight zero), not
    an error. :class:`ELSolveError` is raised only if Newton breaks down.
    """
    h = constraints(data, theta)
    n, q = h.shape
    if n < q + 1:
        raise ValueError(f"need at least {q + 1} observations for {q} constraints")
    if not np.all(np.isfinite(h)):
        raise ValueError("estimating function is not finite on the data")

    if q == 1 and not (h.min() < 0.0 < h.max()):
        return ELResult(-math.inf, np.zeros(n), np.zeros(1), False, ELStatus.HULL_VIOLATION, 0)

    eps = 1.0 / n
    lam = np.zeros(q)
    z = np.ones(n)
    val, d1, d2 = _pseudo_log(z, eps)
    f = val.sum()
    it = 0
    status = ELStatus.MAX_ITER
    for it in range(1, max_iter + 1):
        grad = h.T @ d1
        if np.max(np.abs(grad)) / n < tol:
            status = ELStatus.CONVERGED
            lam, z, f = _polish(h, lam, z, f, grad, d2, eps)
            break
        hess = (h * d2[:, None]).T @ h
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise ELSolveError("singular Hessian in the dual problem") from exc
        if not np.all(np.isfinite(step)):
            raise ELSolveError("non-finite Newton step")
        t = 1.0
        while True:
            lam_new = lam + t * step
            z_new = 1.0 + h @ lam_new
            val_new, d1_new, d2_new = _pseudo_log(z_new, eps)
            f_new = val_new.sum()
            if f_new >= f - 1e-12 * abs(f) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and f_new < f:
            raise ELSolveError("line search made no progress")
        lam, z, f, d1, d2 = lam_new, z_new, f_new, d1_new, d2_new
        if np.all(z >= 1.0) and np.any(z > 1.0):
            # lambda' h_i >= 0 for every i: zero cannot be an interior point
            return ELResult(-math.inf, np.zeros(n), lam, False, ELStatus.HULL_VIOLATION, it)
    else:
        grad = h.T @ d1
        if np.max(np.abs(grad)) / n < tol:
            status = ELStatus.CONVERGED

    if np.any(z < eps * (1.0 - 1e-9)):
        return ELResult(-math.inf, np.zeros(n), lam, False, ELStatus.HULL_VIOLATION, it)
    p = 1.0 / (n * z)
    if status is not ELStatus.CONVERGED:
        # gradient stuck but weights valid: still usable only if constraints hold
        if abs(p.sum() - 1.0) > 1e-6 or np.max(np.abs(p @ h)) > 1e-6:
            return ELResult(-math.inf, np.zeros(n), lam, False, ELStatus.HULL_VIOLATION, it)
    log_el = float(-np.log(n * z).sum())
    return ELResult(log_el, p, lam, status is ELStatus.CONVERGED, status, it)
