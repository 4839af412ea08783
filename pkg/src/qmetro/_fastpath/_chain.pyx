# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential chain kernel (BLAS zgemv loop)."""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport zgemv

cnp.import_array()

BACKEND = "cython"


def chain_apply(qs, v0):
    """Trajectory of v_{j+1} = Q_j v_j; qs (n_steps, m, m) -> (n_steps + 1, m)."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] q = np.ascontiguousarray(qs, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.array(v0, dtype=np.complex128).reshape(-1)
    cdef Py_ssize_t ns = q.shape[0]
    cdef int m = <int> q.shape[1]
    if q.shape[2] != q.shape[1] or v.shape[0] != q.shape[1]:
        raise ValueError("chain_apply shape mismatch")
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty((ns + 1, m), dtype=np.complex128)
    out[0, :] = v
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef int inc = 1
    cdef Py_ssize_t j
    # Row-major A @ x equals column-major A^T applied with trans='T'.
    cdef char trans = b'T'
    for j in range(ns):
        zgemv(&trans, &m, &m, &one, &q[j, 0, 0], &m, &out[j, 0], &inc, &zero, &out[j + 1, 0], &inc)
    return out
