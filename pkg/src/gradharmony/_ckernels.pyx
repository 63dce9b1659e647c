# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled vector kernels.

Every function here mirrors one in ``_pykernels`` and is selected at import
by ``gradharmony._backend``. Inputs are validated by the callers; the kernels
assume contiguous float64 arrays of matching length.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def norm_sq(const double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * a[i]
    return s


def pair_stats(const double[::1] a, const double[::1] b):
    """Return ``(a.b, |a|^2, |b|^2)`` in a single pass."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double ab = 0.0, aa = 0.0, bb = 0.0
    for i in range(n):
        ab += a[i] * b[i]
        aa += a[i] * a[i]
        bb += b[i] * b[i]
    return ab, aa, bb


def project_out(const double[::1] g1, const double[::1] g2, double c1, double c2):
    """Return ``(g1 - c1*g2, g2 - c2*g1)``."""
    cdef Py_ssize_t i, n = g1.shape[0]
    out1 = np.empty(n, dtype=np.float64)
    out2 = np.empty(n, dtype=np.float64)
    cdef double[::1] o1 = out1
    cdef double[::1] o2 = out2
    for i in range(n):
        o1[i] = g1[i] - c1 * g2[i]
        o2[i] = g2[i] - c2 * g1[i]
    return out1, out2


def weighted_sum(const double[::1] a, const double[::1] b, double wa, double wb):
    cdef Py_ssize_t i, n = a.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = wa * a[i] + wb * b[i]
    return out


def sq_dists(const double[:, ::1] x, const double[:, ::1] y):
    """Pairwise squared Euclidean distances, shape ``(len(x), len(y))``."""
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef double s, t
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = x[i, k] - y[j, k]
                s += t * t
            o[i, j] = s
    return out
