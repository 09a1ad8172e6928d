# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused dense-layer kernels: BLAS matmul + fused bias/activation loops.

Mirrors _numpy_backend exactly (same signatures, same cache convention:
the post-activation output is the backward cache).
"""

import numpy as np

from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

IDENTITY, RELU, TANH = 0, 1, 2

NAME = "cython"


cdef void _gemm(char op_a, char op_b, double alpha,
                double[:, ::1] a, double[:, ::1] b,
                double beta, double[:, ::1] c) noexcept nogil:
    # Row-major C = alpha * op_a(A) @ op_b(B) + beta * C via column-major
    # BLAS: swap operand order and the m/n dims, keep op flags per operand.
    cdef int m = c.shape[0]
    cdef int n = c.shape[1]
    cdef int k = a.shape[1] if op_a == b'n' else a.shape[0]
    cdef int lda = a.shape[1]
    cdef int ldb = b.shape[1]
    cdef int ldc = c.shape[1]
    dgemm(&op_b, &op_a, &n, &m, &k, &alpha,
          &b[0, 0], &ldb, &a[0, 0], &lda, &beta, &c[0, 0], &ldc)


def dense_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b, int act):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t dout = w.shape[0]
    out_arr = np.empty((n, dout), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double v
    if n > 0:
        _gemm(b'n', b't', 1.0, x, w, 0.0, out)
    with nogil:
        for i in range(n):
            for j in range(dout):
                v = out[i, j] + b[j]
                if act == 1:
                    if v < 0.0:
                        v = 0.0
                elif act == 2:
                    v = tanh(v)
                out[i, j] = v
    return out_arr


def dense_backward(double[:, ::1] dy, double[:, ::1] x, double[:, ::1] w,
                   double[:, ::1] out, int act, dw, db, bint need_dx):
    cdef Py_ssize_t n = dy.shape[0]
    cdef Py_ssize_t dout = dy.shape[1]
    dpre_arr = np.empty((n, dout), dtype=np.float64)
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dw_mv
    cdef double[::1] db_mv
    cdef double[:, ::1] dx_mv
    cdef Py_ssize_t i, j
    cdef double g, o
    with nogil:
        for i in range(n):
            for j in range(dout):
                g = dy[i, j]
                if act == 1:
                    if out[i, j] <= 0.0:
                        g = 0.0
                elif act == 2:
                    o = out[i, j]
                    g = g * (1.0 - o * o)
                dpre[i, j] = g
    if dw is not None:
        dw_mv = dw
        db_mv = db
        if n > 0:
            _gemm(b't', b'n', 1.0, dpre, x, 1.0, dw_mv)
        with nogil:
            for i in range(n):
                for j in range(dout):
                    db_mv[j] += dpre[i, j]
    if need_dx:
        dx_arr = np.empty((n, x.shape[1]), dtype=np.float64)
        dx_mv = dx_arr
        if n > 0:
            _gemm(b'n', b'n', 1.0, dpre, w, 0.0, dx_mv)
        return dx_arr
    return None
