# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels (see numpy_backend for contracts)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def gather_windows(cnp.ndarray[cnp.float64_t, ndim=2] h, Py_ssize_t k):
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t d = h.shape[1]
    cdef Py_ssize_t m = n - k + 1
    if m <= 0:
        return np.zeros((0, k * d), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((m, k * d), dtype=np.float64)
    cdef Py_ssize_t i, j, c
    for i in range(m):
        for j in range(k):
            for c in range(d):
                out[i, j * d + c] = h[i + j, c]
    return out


def scatter_windows(cnp.ndarray[cnp.float64_t, ndim=2] dxw, Py_ssize_t k,
                    Py_ssize_t n, Py_ssize_t d):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, d), dtype=np.float64)
    cdef Py_ssize_t m = dxw.shape[0]
    cdef Py_ssize_t i, j, c
    for i in range(m):
        for j in range(k):
            for c in range(d):
                out[i + j, c] += dxw[i, j * d + c]
    return out


def segment_max(cnp.ndarray[cnp.float64_t, ndim=1] values,
                cnp.ndarray[cnp.int64_t, ndim=1] group_ids,
                Py_ssize_t n_groups):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gmax = np.full(n_groups, -np.inf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] argmax = np.full(n_groups, values.shape[0], dtype=np.int64)
    cdef Py_ssize_t i, g
    for i in range(values.shape[0]):
        g = group_ids[i]
        if values[i] > gmax[g]:
            gmax[g] = values[i]
            argmax[g] = i
    return gmax, argmax


def hinge_terms(cnp.ndarray[cnp.float64_t, ndim=1] pos,
                cnp.ndarray[cnp.float64_t, ndim=1] neg,
                double margin):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dpos = np.zeros(pos.shape[0], dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dneg = np.zeros(neg.shape[0], dtype=np.float64)
    cdef double loss_sum = 0.0
    cdef double m
    cdef Py_ssize_t i, j
    for i in range(pos.shape[0]):
        for j in range(neg.shape[0]):
            m = margin - pos[i] + neg[j]
            if m > 0.0:
                loss_sum += m
                dpos[i] -= 1.0
                dneg[j] += 1.0
    return loss_sum, dpos, dneg


def embedding_scatter_add(cnp.ndarray[cnp.float64_t, ndim=2] table_grad,
                          cnp.ndarray[cnp.int64_t, ndim=1] ids,
                          cnp.ndarray[cnp.float64_t, ndim=2] dh):
    cdef Py_ssize_t i, c
    cdef Py_ssize_t d = dh.shape[1]
    for i in range(ids.shape[0]):
        for c in range(d):
            table_grad[ids[i], c] += dh[i, c]
