# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see _kernels_py.py for the reference semantics."""
import numpy as np
from libc.math cimport exp, log, cos, acos, fmax, M_PI
from scipy.linalg.cython_blas cimport dgemm

from ._kernels_py import graded_nodes

_v, _wv = graded_nodes()
cdef double[::1] _V = np.ascontiguousarray(_v)
cdef double[::1] _WV = np.ascontiguousarray(_wv)
cdef Py_ssize_t _NV = _V.shape[0]


def lateral_mass(xi, decay, innov, init_sd, basis, double gamma, double var, double dtheta):
    cdef double[:, :, ::1] x = np.ascontiguousarray(xi, dtype=np.float64)
    cdef double[::1] dec = np.ascontiguousarray(decay, dtype=np.float64)
    cdef double[::1] inn = np.ascontiguousarray(innov, dtype=np.float64)
    cdef double[::1] sd0 = np.ascontiguousarray(init_sd, dtype=np.float64)
    cdef double[:, ::1] bas = np.ascontiguousarray(basis, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], rows = x.shape[1], m = x.shape[2]
    cdef Py_ssize_t nth = bas.shape[1]
    cdef double[:, ::1] coef = np.empty((rows, m))
    cdef double[:, ::1] y = np.empty((rows, nth))
    out_arr = np.empty((n, rows))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, r, k, j
    cdef double half = 0.5 * gamma * gamma * var
    cdef double acc
    cdef int M = <int>nth, N = <int>rows, K = <int>m
    cdef int lda = <int>nth, ldb = <int>m, ldc = <int>nth
    cdef double one = 1.0, zero = 0.0
    cdef char tr = b'N'
    with nogil:
        for b in range(n):
            for k in range(m):
                coef[0, k] = sd0[k] * x[b, 0, k]
            for r in range(1, rows):
                for k in range(m):
                    coef[r, k] = dec[k] * coef[r - 1, k] + inn[k] * x[b, r, k]
            # row-major y = coef @ bas, written as column-major y^T = bas^T coef^T
            dgemm(&tr, &tr, &M, &N, &K, &one, &bas[0, 0], &lda, &coef[0, 0], &ldb, &zero, &y[0, 0], &ldc)
            for r in range(rows):
                acc = 0.0
                for j in range(nth):
                    acc += exp(gamma * y[r, j] - half)
                out[b, r] = dtheta * acc
    return out_arr


def exp_weighted_colsum(x, shift, a, double gamma):
    cdef double[::1, :] xv = np.asfortranarray(x, dtype=np.float64)
    cdef double[::1] sh = np.ascontiguousarray(shift, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], nb = xv.shape[1], i, b
    out_arr = np.empty(nb)
    cdef double[::1] out = out_arr
    cdef double acc
    with nogil:
        for b in range(nb):
            acc = 0.0
            for i in range(n):
                acc += av[i] * exp(gamma * xv[i, b] - sh[i])
            out[b] = acc
    return out_arr


cdef inline double _one_log_average(double d, double r1, double r2) nogil:
    cdef double c, th0, span, th, dist2, acc
    cdef Py_ssize_t k
    if d >= r1 + r2:
        return -log(d)
    if d + r1 <= r2:
        return -log(r2)
    if d + r2 <= r1:
        return -log(r1)
    c = (r2 * r2 - d * d - r1 * r1) / (2 * d * r1)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    th0 = acos(c)
    span = M_PI - th0
    acc = 0.0
    for k in range(_NV):
        th = M_PI - span * _V[k]
        dist2 = d * d + r1 * r1 + 2 * d * r1 * cos(th)
        acc += _WV[k] * span * (-log(r2) + 0.5 * log(fmax(dist2, 1e-300)))
    return -log(fmax(d, r1)) + acc / M_PI


def circle_log_average(d, r1, r2):
    d_b, r1_b, r2_b = np.broadcast_arrays(
        np.asarray(d, dtype=np.float64), np.asarray(r1, dtype=np.float64), np.asarray(r2, dtype=np.float64)
    )
    shape = d_b.shape
    cdef double[::1] dv = np.ascontiguousarray(d_b).ravel()
    cdef double[::1] v1 = np.ascontiguousarray(r1_b).ravel()
    cdef double[::1] v2 = np.ascontiguousarray(r2_b).ravel()
    cdef Py_ssize_t n = dv.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _one_log_average(dv[i], v1[i], v2[i])
    return out_arr.reshape(shape)
