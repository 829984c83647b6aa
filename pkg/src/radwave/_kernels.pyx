# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled leapfrog kernel; see ``_kernels_py.leapfrog`` for the contract."""

import numpy as np
from libc.math cimport fabs, pow


def leapfrog(double[::1] chi0, double[::1] chi1, double[::1] rate0,
             double[::1] weight, coef, double lam2, double dt2, double pm1,
             Py_ssize_t steps, Py_ssize_t store_every, Py_ssize_t r_every,
             double inv_2dt, double limit):
    cdef Py_ssize_t n = chi0.shape[0]
    cdef Py_ssize_t n_store = steps // store_every + 1
    cdef Py_ssize_t n_rs = (n - 1) // r_every + 1
    values_arr = np.empty((n_store, n_rs))
    rates_arr = np.empty((n_store, n_rs))
    cdef double[:, ::1] values = values_arr
    cdef double[:, ::1] rates = rates_arr
    cdef double[:, ::1] cf
    cdef bint has_coef = coef is not None
    if has_coef:
        cf = np.ascontiguousarray(coef, dtype=np.float64)
    else:
        cf = np.ones((1, 1))
    bufs = np.zeros((3, n))
    cdef double[:, ::1] buf = bufs
    cdef double[::1] prev = buf[0]
    cdef double[::1] cur = buf[1]
    cdef double[::1] nxt = buf[2]
    cdef double[::1] tmp
    cdef Py_ssize_t j, level, k
    cdef double x, nl, lap, v
    cdef bint square = pm1 == 2.0

    for j in range(n):
        prev[j] = chi0[j]
        cur[j] = chi1[j]
    for j in range(n_rs):
        values[0, j] = chi0[j * r_every]
        rates[0, j] = rate0[j * r_every]

    for level in range(1, steps + 1):
        for j in range(1, n - 1):
            x = cur[j]
            if x == 0.0:
                nl = x * weight[j]  # keeps the sign of zero that pow would give
            elif square:
                nl = (x * x) * x * weight[j]
            else:
                nl = pow(fabs(x), pm1) * x * weight[j]
            if has_coef:
                nl = nl * cf[level, j]
            lap = (cur[j + 1] - 2.0 * x) + cur[j - 1]
            v = ((2.0 * x - prev[j]) + lam2 * lap) - dt2 * nl
            if not (fabs(v) <= limit):
                return values_arr, rates_arr, 1, level + 1, j
            nxt[j] = v
        if level % store_every == 0:
            k = level // store_every
            for j in range(n_rs):
                values[k, j] = cur[j * r_every]
                rates[k, j] = (nxt[j * r_every] - prev[j * r_every]) * inv_2dt
        tmp = prev
        prev = cur
        cur = nxt
        nxt = tmp
    return values_arr, rates_arr, 0, -1, -1
