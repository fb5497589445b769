# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the batched loss kernels.

Mirrors ``_numpy.py``; the inner loops fuse softmax, the weighted-moment
accumulation and the gradient assembly into single passes over each row.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, pow

cnp.import_array()

DEF RAW_MODE_EPS = 1e-12


def backend_name():
    return "c"


def softmax(const double[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], d = logits.shape[1]
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, total
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, d):
            if logits[i, j] > m:
                m = logits[i, j]
        total = 0.0
        for j in range(d):
            out[i, j] = exp(logits[i, j] - m)
            total += out[i, j]
        for j in range(d):
            out[i, j] /= total
    return out_arr


def cross_entropy(const double[:, ::1] logits, const cnp.int64_t[::1] targets):
    cdef Py_ssize_t n = logits.shape[0], d = logits.shape[1]
    values_arr = np.empty(n, dtype=np.float64)
    grads_arr = np.empty((n, d), dtype=np.float64)
    cdef double[::1] values = values_arr
    cdef double[:, ::1] grads = grads_arr
    cdef Py_ssize_t i, j, a
    cdef double m, total, p
    for i in range(n):
        a = targets[i]
        m = logits[i, 0]
        for j in range(1, d):
            if logits[i, j] > m:
                m = logits[i, j]
        total = 0.0
        for j in range(d):
            grads[i, j] = exp(logits[i, j] - m)
            total += grads[i, j]
        for j in range(d):
            grads[i, j] /= total
        p = grads[i, a]
        values[i] = -log(p)
        grads[i, a] = p - 1.0
    return values_arr, grads_arr


def wasserstein(const double[:, ::1] logits, const cnp.int64_t[::1] targets,
                double p, double r, bint pth_power):
    cdef Py_ssize_t n = logits.shape[0], d = logits.shape[1]
    values_arr = np.empty(n, dtype=np.float64)
    grads_arr = np.empty((n, d), dtype=np.float64)
    cdef double[::1] values = values_arr
    cdef double[:, ::1] grads = grads_arr
    cdef Py_ssize_t i, j, a
    cdef double m, total, s, w, wp, rp, chain, root_arg
    cdef bint p_is_1 = (p == 1.0), p_is_2 = (p == 2.0)
    rp = pow(r, p)
    for i in range(n):
        a = targets[i]
        m = logits[i, 0]
        for j in range(1, d):
            if logits[i, j] > m:
                m = logits[i, j]
        total = 0.0
        for j in range(d):
            grads[i, j] = exp(logits[i, j] - m)
            total += grads[i, j]
        # grads row holds the probabilities until the final assembly pass
        s = 0.0
        for j in range(d):
            grads[i, j] /= total
            w = fabs(<double>(j - a))
            if p_is_1:
                wp = w
            elif p_is_2:
                wp = w * w
            else:
                wp = pow(w, p)
            s += grads[i, j] * wp
        if pth_power:
            values[i] = rp * s
            chain = rp
        else:
            values[i] = r * pow(s, 1.0 / p)
            root_arg = s if s > RAW_MODE_EPS else RAW_MODE_EPS
            chain = (r / p) * pow(root_arg, 1.0 / p - 1.0)
        for j in range(d):
            w = fabs(<double>(j - a))
            if p_is_1:
                wp = w
            elif p_is_2:
                wp = w * w
            else:
                wp = pow(w, p)
            grads[i, j] = chain * grads[i, j] * (wp - s)
    return values_arr, grads_arr
