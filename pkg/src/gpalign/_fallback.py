"""Pure-Python/numpy versions of the routines in ``_core.pyx``.

Selected by :mod:`gpalign._accel` when the compiled extension is missing or
``GPALIGN_PURE_PYTHON=1``.  Results must match the compiled versions to
rounding.
"""

import math

import numpy as np

SE, MATERN12, MATERN32, PERIODIC = 0, 1, 2, 3


def radial_terms_1d(family, params, a, b):
    """Kernel value, d/dlog-lengthscale, d/dlog-period and radial factor on scalar inputs."""
    v, ell, per = params[0], params[1], params[2]
    r = np.abs(a[:, None] - b[None, :])
    dlogp = np.zeros_like(r)
    if family == SE:
        k = v * np.exp(-0.5 * (r / ell) ** 2)
        return k, k * (r / ell) ** 2, dlogp, -k / ell**2
    if family == MATERN12:
        k = v * np.exp(-r / ell)
        with np.errstate(divide="ignore", invalid="ignore"):
            rad = np.where(r > 0, -k / (ell * r), 0.0)
        return k, k * r / ell, dlogp, rad
    if family == MATERN32:
        u = math.sqrt(3.0) * r / ell
        e = np.exp(-u)
        return v * (1.0 + u) * e, v * u * u * e, dlogp, -3.0 * v * e / ell**2
    s = np.sin(np.pi * r / per)
    k = v * np.exp(-2.0 * s * s / ell**2)
    dlogl = k * 4.0 * s * s / ell**2
    dlogp = k * (2.0 * np.pi * r / (per * ell**2)) * np.sin(2.0 * np.pi * r / per)
    rad = -k * (2.0 * np.pi / (per * ell**2)) * (2.0 * np.pi / per) * np.sinc(2.0 * r / per)
    return k, dlogl, dlogp, rad


def dtw_accumulate(cost):
    """Accumulated-cost table for steps (1,0), (0,1), (1,1)."""
    na, nb = cost.shape
    acc = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            c = cost[i, j]
            if i == 0 and j == 0:
                acc[i, j] = c
            elif i == 0:
                acc[i, j] = c + acc[i, j - 1]
            elif j == 0:
                acc[i, j] = c + acc[i - 1, j]
            else:
                acc[i, j] = c + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return acc


def dtw_backtrack(acc):
    """Optimal path from (0, 0) to the last cell; ties prefer the diagonal step."""
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            d, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if d <= up and d <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return np.asarray(path, dtype=np.int64)
