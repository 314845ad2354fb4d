# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled projection kernels.

Row-for-row port of :mod:`bilevelkit._kernels_py`; see that module for
the contracts. Rows are independent, so everything runs in plain C
loops without the GIL.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc, qsort

cnp.import_array()

cdef double SNAP_TOL = 1e-14


cdef int _cmp_desc(const void* pa, const void* pb) noexcept nogil:
    cdef double a = (<const double*> pa)[0]
    cdef double b = (<const double*> pb)[0]
    if a < b:
        return 1
    if a > b:
        return -1
    return 0


def box_project(double[:, ::1] Z, double[::1] lo, double[::1] hi):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v
    with nogil:
        for i in range(n):
            for j in range(d):
                v = Z[i, j]
                if v < lo[j]:
                    v = lo[j]
                elif v > hi[j]:
                    v = hi[j]
                out[i, j] = v
    return out_arr


def halfspace_project(double[:, ::1] Z, double[::1] a, double b):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double aa = 0.0, viol, coef
    with nogil:
        for j in range(d):
            aa += a[j] * a[j]
        for i in range(n):
            viol = 0.0
            for j in range(d):
                viol += Z[i, j] * a[j]
            viol -= b
            if viol > 0.0:
                coef = viol / aa
                for j in range(d):
                    out[i, j] = Z[i, j] - coef * a[j]
            else:
                for j in range(d):
                    out[i, j] = Z[i, j]
    return out_arr


def l2ball_project(double[:, ::1] Z, double[::1] center, double radius):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s, nrm, scale, dev
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(d):
                dev = Z[i, j] - center[j]
                s += dev * dev
            nrm = sqrt(s)
            if nrm > radius:
                scale = radius / nrm
                for j in range(d):
                    out[i, j] = center[j] + (Z[i, j] - center[j]) * scale
            else:
                for j in range(d):
                    out[i, j] = Z[i, j]
    return out_arr


cdef void _simplex_row(const double* z, double* out, double* buf,
                       Py_ssize_t d, double total) noexcept nogil:
    cdef Py_ssize_t j, rho = 1
    cdef double css = 0.0, theta = 0.0, cand, w
    for j in range(d):
        buf[j] = z[j]
    qsort(buf, d, sizeof(double), _cmp_desc)
    for j in range(d):
        css += buf[j]
        cand = (css - total) / (j + 1)
        if buf[j] - cand > 0.0:
            rho = j + 1
            theta = cand
    for j in range(d):
        w = z[j] - theta
        if w < SNAP_TOL:
            w = 0.0
        out[j] = w


def simplex_project(double[:, ::1] Z, double total):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], i
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* buf
    with nogil:
        buf = <double*> malloc(d * sizeof(double))
        if buf != NULL:
            for i in range(n):
                _simplex_row(&Z[i, 0], &out[i, 0], buf, d, total)
            free(buf)
    if buf == NULL:
        raise MemoryError("simplex_project: buffer allocation failed")
    return out_arr


def l1ball_project(double[:, ::1] Z, double radius):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], i, j
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* absbuf
    cdef double* buf
    cdef double* w
    cdef double l1
    with nogil:
        absbuf = <double*> malloc(3 * d * sizeof(double))
        if absbuf != NULL:
            buf = absbuf + d
            w = absbuf + 2 * d
            for i in range(n):
                l1 = 0.0
                for j in range(d):
                    absbuf[j] = fabs(Z[i, j])
                    l1 += absbuf[j]
                if l1 <= radius:
                    for j in range(d):
                        out[i, j] = Z[i, j]
                else:
                    _simplex_row(absbuf, w, buf, d, radius)
                    for j in range(d):
                        out[i, j] = -w[j] if Z[i, j] < 0.0 else w[j]
            free(absbuf)
    if absbuf == NULL:
        raise MemoryError("l1ball_project: buffer allocation failed")
    return out_arr
