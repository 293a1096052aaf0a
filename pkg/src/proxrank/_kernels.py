"""Compiled inner loops shared by the sequential and threaded paths.

All kernels release the GIL and take explicit index ranges, so the threaded
engine can run them on disjoint slabs while the sequential path calls them
over the full range.  Keeping one implementation guarantees the two paths
produce bitwise-identical floats.
"""

import numpy as np
from numba import njit

__all__ = [
    "csr_matmat",
    "csc_matmat",
    "gather_factored",
    "sumsq_diff",
    "axpy_rows",
]


@njit(nogil=True, cache=True)
def csr_matmat(indptr, col_idx, vals, w, out, row_lo, row_hi):
    """out[row_lo:row_hi] += A[row_lo:row_hi] @ w for CSR-stored A."""
    k = w.shape[1]
    for i in range(row_lo, row_hi):
        for p in range(indptr[i], indptr[i + 1]):
            j = col_idx[p]
            v = vals[p]
            for c in range(k):
                out[i, c] += v * w[j, c]


@njit(nogil=True, cache=True)
def csc_matmat(indptr, row_idx, val_order, vals, w, out, col_lo, col_hi):
    """out[col_lo:col_hi] += A.T[col_lo:col_hi] @ w for CSC-indexed A.

    ``val_order`` maps CSC slots to positions in the shared row-major value
    array.
    """
    k = w.shape[1]
    for j in range(col_lo, col_hi):
        for p in range(indptr[j], indptr[j + 1]):
            i = row_idx[p]
            v = vals[val_order[p]]
            for c in range(k):
                out[j, c] += v * w[i, c]


@njit(nogil=True, cache=True)
def gather_factored(us, v, rows, cols, out, lo, hi):
    """out[e] = <us[rows[e]], v[cols[e]]> for entries lo..hi (us = U * s)."""
    r = us.shape[1]
    for e in range(lo, hi):
        acc = 0.0
        i = rows[e]
        j = cols[e]
        for c in range(r):
            acc += us[i, c] * v[j, c]
        out[e] = acc


@njit(nogil=True, cache=True)
def sumsq_diff(a, b, lo, hi):
    acc = 0.0
    for e in range(lo, hi):
        d = a[e] - b[e]
        acc += d * d
    return acc


@njit(nogil=True, cache=True)
def axpy_rows(alpha, x, out, row_lo, row_hi):
    """out[row_lo:row_hi] += alpha * x[row_lo:row_hi] (2-D row slabs)."""
    k = x.shape[1]
    for i in range(row_lo, row_hi):
        for c in range(k):
            out[i, c] += alpha * x[i, c]
