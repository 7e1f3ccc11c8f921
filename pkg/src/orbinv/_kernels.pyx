# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled jet arithmetic kernels (see ``_kernels_py`` for the reference)."""

import numpy as np


def mul(const double[::1] a, const double[::1] b, const Py_ssize_t[::1] ptr,
        const Py_ssize_t[::1] I, const Py_ssize_t[::1] J):
    cdef Py_ssize_t n = ptr.shape[0] - 1
    cdef Py_ssize_t k, p
    cdef double s
    out = np.empty(n)
    cdef double[::1] o = out
    for k in range(n):
        s = 0.0
        for p in range(ptr[k], ptr[k + 1]):
            s += a[I[p]] * b[J[p]]
        o[k] = s
    return out


def div(const double[::1] a, const double[::1] b, const Py_ssize_t[::1] ptr,
        const Py_ssize_t[::1] I, const Py_ssize_t[::1] J, blocks=None):
    cdef Py_ssize_t n = ptr.shape[0] - 1
    cdef Py_ssize_t k, p
    cdef double s
    cdef double b0 = b[0]
    out = np.empty(n)
    cdef double[::1] q = out
    for k in range(n):
        s = 0.0
        # skip the leading (0, k) pair: it carries the unknown q[k]
        for p in range(ptr[k] + 1, ptr[k + 1]):
            s += b[I[p]] * q[J[p]]
        q[k] = (a[k] - s) / b0
    return out


def horner(const double[::1] c, const double[::1] h, const Py_ssize_t[::1] ptr,
           const Py_ssize_t[::1] I, const Py_ssize_t[::1] J):
    cdef Py_ssize_t n = ptr.shape[0] - 1
    cdef Py_ssize_t m = c.shape[0]
    cdef Py_ssize_t k, p, t
    cdef double s
    out = np.zeros(n)
    tmp = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] w = tmp
    o[0] = c[m - 1]
    for t in range(m - 2, -1, -1):
        for k in range(n):
            s = 0.0
            for p in range(ptr[k], ptr[k + 1]):
                s += o[I[p]] * h[J[p]]
            w[k] = s
        for k in range(n):
            o[k] = w[k]
        o[0] += c[t]
    return out
