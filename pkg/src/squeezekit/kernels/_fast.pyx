# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled attention kernels.

Same contract as kernels._ref, with the causal masked softmax fused into
the score computation (only the lower triangle is ever touched) and the
decode step run as a single C loop over heads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, INFINITY

BACKEND_NAME = "compiled"


def causal_attention_probs(double[:, :, ::1] q, double[:, :, ::1] k, double scale):
    cdef Py_ssize_t H = q.shape[0]
    cdef Py_ssize_t l = q.shape[1]
    cdef Py_ssize_t d = q.shape[2]
    out_arr = np.zeros((H, l, l), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t h, i, j, t
    cdef double s, m, z
    for h in range(H):
        for i in range(l):
            m = -INFINITY
            for j in range(i + 1):
                s = 0.0
                for t in range(d):
                    s += q[h, i, t] * k[h, j, t]
                s *= scale
                out[h, i, j] = s
                if s > m:
                    m = s
            z = 0.0
            for j in range(i + 1):
                s = exp(out[h, i, j] - m)
                out[h, i, j] = s
                z += s
            for j in range(i + 1):
                out[h, i, j] /= z
    return out_arr


def decode_attention(double[:, ::1] q, keys, values, lengths, double scale):
    cdef Py_ssize_t H = q.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    out_arr = np.empty((H, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    probs_arr = None
    cdef double[:, ::1] kh
    cdef double[:, ::1] vh
    cdef double[::1] p
    cdef Py_ssize_t h, j, t, n
    cdef double s, m, z
    for h in range(H):
        kh = keys[h]
        vh = values[h]
        n = lengths[h]
        if probs_arr is None or probs_arr.shape[0] < n:
            probs_arr = np.empty(max(n, 16), dtype=np.float64)
        p = probs_arr
        m = -INFINITY
        for j in range(n):
            s = 0.0
            for t in range(d):
                s += kh[j, t] * q[h, t]
            s *= scale
            p[j] = s
            if s > m:
                m = s
        z = 0.0
        for j in range(n):
            s = exp(p[j] - m)
            p[j] = s
            z += s
        for t in range(d):
            out[h, t] = 0.0
        for j in range(n):
            s = p[j] / z
            for t in range(d):
                out[h, t] += s * vh[j, t]
    return out_arr
