# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels: the hot loops of the multilevel solver.

Row sums accumulate over ascending column index so results are
deterministic and bit-stable run to run.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t idx_t
ctypedef cnp.float64_t real_t


def csr_matvec(idx_t[::1] indptr, idx_t[::1] indices, real_t[::1] data,
               real_t[::1] x, real_t[::1] out):
    """out <- A @ x for CSR (indptr, indices, data); out has len(indptr)-1."""
    cdef Py_ssize_t i, k
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef real_t acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


def csr_matvec_t(idx_t[::1] indptr, idx_t[::1] indices, real_t[::1] data,
                 real_t[::1] x, real_t[::1] out):
    """out <- A.T @ x; x has len(indptr)-1 entries, out is pre-sized."""
    cdef Py_ssize_t i, k
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef real_t xi
    out[:] = 0.0
    for i in range(n):
        xi = x[i]
        if xi != 0.0:
            for k in range(indptr[i], indptr[i + 1]):
                out[indices[k]] += data[k] * xi


def csr_shifted_matvec(idx_t[::1] indptr, idx_t[::1] indices,
                       real_t[::1] data_a, real_t[::1] data_m, real_t lam,
                       real_t[::1] x, real_t[::1] out):
    """out <- (A - lam*M) @ x for two CSR matrices sharing one sparsity."""
    cdef Py_ssize_t i, k
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef real_t acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += (data_a[k] - lam * data_m[k]) * x[indices[k]]
        out[i] = acc
