# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-path exit scans and skeleton bookkeeping.

Must match ``reference.py`` exactly; see tests/test_kernels.py.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "fastpath"


def first_exit_radius(const double[:, :, ::1] values, double eps, int start=0):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t d = values.shape[2]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double s, eps2 = eps * eps
    for i in range(n):
        o[i] = m
        for j in range(start if start > 0 else 0, m):
            s = 0.0
            for k in range(d):
                s += values[i, j, k] * values[i, j, k]
            if s >= eps2:
                o[i] = j
                break
    return out


def first_exit_halfspaces(const double[:, :, ::1] values, const double[:, ::1] normals, const double[::1] offsets):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t d = values.shape[2]
    cdef Py_ssize_t nh = normals.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t i, j, k, h
    cdef double s
    cdef bint hit
    for i in range(n):
        o[i] = m
        for j in range(m):
            hit = 0
            for h in range(nh):
                s = 0.0
                for k in range(d):
                    s += normals[h, k] * values[i, j, k]
                if s >= offsets[h]:
                    hit = 1
                    break
            if hit:
                o[i] = j
                break
    return out


def skeleton_scan(const double[:, :, ::1] values, const double[::1] times, double eps):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t d = values.shape[2]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] anchor = np.zeros((n, m), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] integral = np.zeros((n, m, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] high = np.zeros((n, m, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] low = np.zeros((n, m, d))
    cdef long long[:, ::1] av = anchor
    cdef double[:, :, ::1] iv = integral
    cdef double[:, :, ::1] hv = high
    cdef double[:, :, ::1] lv = low
    cdef Py_ssize_t i, j, k, a
    cdef double s, diff, eps2 = eps * eps
    for i in range(n):
        a = 0
        for k in range(d):
            hv[i, 0, k] = values[i, 0, k]
            lv[i, 0, k] = values[i, 0, k]
        for j in range(1, m):
            s = 0.0
            for k in range(d):
                diff = values[i, j, k] - values[i, a, k]
                s += diff * diff
            if s >= eps2:
                for k in range(d):
                    iv[i, j, k] = iv[i, j - 1, k] + 0.5 * (values[i, a, k] + values[i, j, k]) * (times[j] - times[a])
                    hv[i, j, k] = hv[i, j - 1, k] if hv[i, j - 1, k] > values[i, j, k] else values[i, j, k]
                    lv[i, j, k] = lv[i, j - 1, k] if lv[i, j - 1, k] < values[i, j, k] else values[i, j, k]
                a = j
            else:
                for k in range(d):
                    iv[i, j, k] = iv[i, j - 1, k]
                    hv[i, j, k] = hv[i, j - 1, k]
                    lv[i, j, k] = lv[i, j - 1, k]
            av[i, j] = a
    return anchor, integral, high, low


def euler_paths(const double[:, :, ::1] increments):
    cdef Py_ssize_t n = increments.shape[0]
    cdef Py_ssize_t k = increments.shape[1]
    cdef Py_ssize_t d = increments.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((n, k + 1, d))
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t i, j, c
    for i in range(n):
        for c in range(d):
            ov[i, 0, c] = 0.0
        for j in range(k):
            for c in range(d):
                ov[i, j + 1, c] = ov[i, j, c] + increments[i, j, c]
    return out
