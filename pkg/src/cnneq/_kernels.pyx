# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv1d_forward(x, w, Py_ssize_t stride):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t c_in = xv.shape[0], n_in = xv.shape[1]
    cdef Py_ssize_t c_out = wv.shape[0], k = wv.shape[2]
    cdef Py_ssize_t half = (k - 1) // 2
    cdef Py_ssize_t n_out = n_in // stride
    y = np.zeros((c_out, n_out), dtype=np.float64)
    cdef double[:, ::1] yv = y
    cdef Py_ssize_t o, i, j, kk, pos, k_lo, k_hi
    cdef double acc
    with nogil:
        for o in range(c_out):
            for j in range(n_out):
                pos = j * stride - half
                k_lo = 0 if pos >= 0 else -pos
                k_hi = k if pos + k <= n_in else n_in - pos
                acc = 0.0
                for i in range(c_in):
                    for kk in range(k_lo, k_hi):
                        acc = acc + xv[i, pos + kk] * wv[o, i, kk]
                yv[o, j] = acc
    return y


def conv1d_backward(x, w, gy, Py_ssize_t stride):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t c_in = xv.shape[0], n_in = xv.shape[1]
    cdef Py_ssize_t c_out = wv.shape[0], k = wv.shape[2]
    cdef Py_ssize_t half = (k - 1) // 2
    cdef Py_ssize_t n_out = gv.shape[1]
    gx = np.zeros((c_in, n_in), dtype=np.float64)
    gw = np.zeros((c_out, c_in, k), dtype=np.float64)
    cdef double[:, ::1] gxv = gx
    cdef double[:, :, ::1] gwv = gw
    cdef Py_ssize_t o, i, j, kk, pos, k_lo, k_hi
    cdef double g
    with nogil:
        for o in range(c_out):
            for j in range(n_out):
                g = gv[o, j]
                pos = j * stride - half
                k_lo = 0 if pos >= 0 else -pos
                k_hi = k if pos + k <= n_in else n_in - pos
                for i in range(c_in):
                    for kk in range(k_lo, k_hi):
                        gwv[o, i, kk] += g * xv[i, pos + kk]
                        gxv[i, pos + kk] += g * wv[o, i, kk]
    return gx, gw


def queue_departures(arrivals, Py_ssize_t width, long long latency, long long service):
    cdef long long[::1] a = np.ascontiguousarray(arrivals, dtype=np.int64)
    cdef Py_ssize_t n = a.shape[0]
    dep = np.empty(n, dtype=np.int64)
    cdef long long[::1] d = dep
    cdef Py_ssize_t i
    cdef long long t, s, prev = -(1LL << 62)
    with nogil:
        for i in range(n):
            t = a[i] + latency
            if t < prev:
                t = prev
            if i >= width:
                s = d[i - width] + service
                if t < s:
                    t = s
            d[i] = t
            prev = t
    return dep
