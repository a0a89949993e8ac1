# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for single-vector dense forward passes.

Search spends nearly all its time pushing one 16-float vector through tiny
MLPs; at that size the per-call overhead of numpy dominates the arithmetic.
This kernel does the whole affine+relu chain in C loops instead.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

KERNEL = "compiled"


cdef void _affine(const double[:, ::1] W, const double[::1] b,
                  const double[::1] x, double[::1] out, bint relu) noexcept nogil:
    # accumulate row-by-row (axpy order): W streams sequentially, the inner
    # loop vectorizes, and rows muted by relu zeros are skipped outright
    cdef Py_ssize_t n_in = W.shape[0]
    cdef Py_ssize_t n_out = W.shape[1]
    cdef Py_ssize_t i, j
    cdef double xi
    for j in range(n_out):
        out[j] = b[j]
    for i in range(n_in):
        xi = x[i]
        if xi == 0.0:
            continue
        for j in range(n_out):
            out[j] += xi * W[i, j]
    if relu:
        for j in range(n_out):
            if out[j] < 0.0:
                out[j] = 0.0


def forward(list Ws, list bs, cnp.ndarray x):
    """Dense forward for one vector: relu on hidden layers, identity output."""
    cdef Py_ssize_t n_layers = len(Ws)
    cdef Py_ssize_t l
    cdef cnp.ndarray h = x
    cdef cnp.ndarray out
    for l in range(n_layers):
        W = <cnp.ndarray> Ws[l]
        b = <cnp.ndarray> bs[l]
        out = np.empty(W.shape[1], dtype=np.float64)
        _affine(W, b, h, out, l != n_layers - 1)
        h = out
    return h
