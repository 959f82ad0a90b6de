"""Compiled inner loops for the sequential simulators."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def garch_path(a0, a1, b1, eps, sigma2_init):
    n = eps.size
    y = np.empty(n)
    s2 = sigma2_init
    for t in range(n):
        if t > 0:
            s2 = a0 + a1 * y[t - 1] * y[t - 1] + b1 * s2
        y[t] = math.sqrt(s2) * eps[t]
    return y


@njit(cache=True)
def euler_path(theta1, theta2, x0, dt, z, bound):
    n = z.size + 1
    x = np.empty(n)
    x[0] = x0
    sq = math.sqrt(dt)
    for k in range(n - 1):
        xk = x[k]
        nxt = xk + (2.0 - theta2 * xk) * dt + (1.0 + xk * xk) ** theta1 * sq * z[k]
        x[k + 1] = nxt
        if not (abs(nxt) <= bound):
            return x[: k + 2], False
    return x, True


@njit(cache=True)
def garch_qml_grad(a0, a1, b1, y):
    """Mean negative quasi-log-likelihood and its gradient in (a0, a1, b1).

    The first conditional variance is the mean of y^2, held fixed.
    """
    n = y.size
    v0 = 0.0
    for t in range(n):
        v0 += y[t] * y[t]
    v0 /= n
    s2 = v0
    d0 = 0.0
    d1 = 0.0
    d2 = 0.0
    f = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    for t in range(n):
        if t > 0:
            yp = y[t - 1] * y[t - 1]
            d0 = 1.0 + b1 * d0
            d1 = yp + b1 * d1
            d2 = s2 + b1 * d2
            s2 = a0 + a1 * yp + b1 * s2
        if not (s2 > 0.0):
            return np.inf, 0.0, 0.0, 0.0
        yt2 = y[t] * y[t]
        f += 0.5 * (math.log(s2) + yt2 / s2)
        gs = 0.5 * (1.0 / s2 - yt2 / (s2 * s2))
        g0 += gs * d0
        g1 += gs * d1
        g2 += gs * d2
    return f / n, g0 / n, g1 / n, g2 / n


@njit(cache=True)
def gibbs_sweeps(x, beta, u):
    """Raster-scan Gibbs sweeps with free boundary; ``u`` holds one uniform per update."""
    m, n = x.shape
    p1 = np.empty(9)
    for k in range(9):
        # P(x=1) given n1 - n0 = k - 4
        p1[k] = 1.0 / (1.0 + math.exp(-beta * (k - 4)))
    for c in range(u.shape[0]):
        for i in range(m):
            for j in range(n):
                d = 0
                if i > 0:
                    d += 2 * x[i - 1, j] - 1
                if i < m - 1:
                    d += 2 * x[i + 1, j] - 1
                if j > 0:
                    d += 2 * x[i, j - 1] - 1
                if j < n - 1:
                    d += 2 * x[i, j + 1] - 1
                x[i, j] = 1 if u[c, i, j] < p1[d + 4] else 0
    return x
