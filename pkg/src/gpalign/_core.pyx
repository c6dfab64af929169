# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: DTW dynamic program and scalar-input kernel terms."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sin, sqrt, M_PI

cnp.import_array()


def radial_terms_1d(int family, double[::1] params, double[::1] a, double[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef double v = params[0], ell = params[1], per = params[2]
    cdef double r, k, u, e, s, x
    cdef double il2 = 1.0 / (ell * ell)
    cdef double s3 = sqrt(3.0)
    out_k = np.empty((n, m))
    out_l = np.empty((n, m))
    out_p = np.zeros((n, m))
    out_r = np.empty((n, m))
    cdef double[:, ::1] K = out_k, DL = out_l, DP = out_p, RAD = out_r
    for i in range(n):
        for j in range(m):
            r = fabs(a[i] - b[j])
            if family == 0:
                k = v * exp(-0.5 * r * r * il2)
                K[i, j] = k
                DL[i, j] = k * r * r * il2
                RAD[i, j] = -k * il2
            elif family == 1:
                k = v * exp(-r / ell)
                K[i, j] = k
                DL[i, j] = k * r / ell
                RAD[i, j] = -k / (ell * r) if r > 0 else 0.0
            elif family == 2:
                u = s3 * r / ell
                e = exp(-u)
                K[i, j] = v * (1.0 + u) * e
                DL[i, j] = v * u * u * e
                RAD[i, j] = -3.0 * v * e * il2
            else:
                s = sin(M_PI * r / per)
                k = v * exp(-2.0 * s * s * il2)
                K[i, j] = k
                DL[i, j] = k * 4.0 * s * s * il2
                DP[i, j] = k * (2.0 * M_PI * r / per * il2) * sin(2.0 * M_PI * r / per)
                x = 2.0 * M_PI * r / per
                if x == 0.0:
                    RAD[i, j] = -k * (2.0 * M_PI / per * il2) * (2.0 * M_PI / per)
                else:
                    RAD[i, j] = -k * (2.0 * M_PI / per * il2) * (2.0 * M_PI / per) * (sin(x) / x)
    return out_k, out_l, out_p, out_r


def dtw_accumulate(double[:, ::1] cost):
    cdef Py_ssize_t na = cost.shape[0], nb = cost.shape[1], i, j
    cdef double best
    out = np.empty((na, nb))
    cdef double[:, ::1] acc = out
    for i in range(na):
        for j in range(nb):
            if i == 0 and j == 0:
                acc[i, j] = cost[i, j]
            elif i == 0:
                acc[i, j] = cost[i, j] + acc[i, j - 1]
            elif j == 0:
                acc[i, j] = cost[i, j] + acc[i - 1, j]
            else:
                best = acc[i - 1, j - 1]
                if acc[i - 1, j] < best:
                    best = acc[i - 1, j]
                if acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                acc[i, j] = cost[i, j] + best
    return out


def dtw_backtrack(double[:, ::1] acc):
    cdef Py_ssize_t i = acc.shape[0] - 1, j = acc.shape[1] - 1, n = 0
    cdef double d, up, left
    buf = np.empty((acc.shape[0] + acc.shape[1], 2), dtype=np.int64)
    cdef long long[:, ::1] path = buf
    path[0, 0] = i
    path[0, 1] = j
    n = 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            d = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if d <= up and d <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path[n, 0] = i
        path[n, 1] = j
        n += 1
    return buf[:n][::-1].copy()
