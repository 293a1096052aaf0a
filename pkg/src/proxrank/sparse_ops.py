"""Sparse observation structures and the sparse-plus-low-rank operator.

The gradient-step matrix of a completion iterate is a sum of (at most two)
low-rank factored matrices and a sparse correction supported on the
observed entries.  Representing it as such keeps every thin multiplication
at O((m + n) k r + nnz k) instead of O(m n k), which is what makes the
whole solver cheap.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .linalg import FactoredMatrix, LinearOperator
from .linalg import frob_dist_sq  # noqa: F401  (distance checks live next to the operator algebra)

__all__ = [
    "SparseObserved",
    "SlrOperator",
    "slr_right_mul",
    "slr_left_mul",
    "project_omega",
    "frob_dist_sq",
]


class SparseObserved:
    """Coordinate-indexed observed entries with row- and col-major traversal.

    Entries are canonically stored in row-major order; a CSC-style index
    shares the same value array through a permutation, so both traversal
    orders cost O(nnz) memory total.  Duplicate coordinates are rejected.
    """

    def __init__(self, m: int, n: int, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols, vals must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise ValueError("entry coordinates out of bounds")
        order = np.lexsort((cols, rows))
        self.m, self.n = int(m), int(n)
        self.rows = rows[order]
        self.cols = cols[order]
        self.vals = vals[order]
        if self.rows.size:
            dup = (np.diff(self.rows) == 0) & (np.diff(self.cols) == 0)
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate coordinate ({self.rows[i]}, {self.cols[i]})")
        self.row_ptr = np.zeros(self.m + 1, dtype=np.int64)
        np.add.at(self.row_ptr, self.rows + 1, 1)
        self.row_ptr = np.cumsum(self.row_ptr)
        # CSC view: permutation into the shared value array
        self.csc_order = np.lexsort((self.rows, self.cols)).astype(np.int64)
        self.csc_rows = self.rows[self.csc_order]
        self.col_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(self.col_ptr, self.cols[self.csc_order] + 1, 1)
        self.col_ptr = np.cumsum(self.col_ptr)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def with_values(self, vals: np.ndarray) -> "SparseObserved":
        """Same pattern, new values (skips re-sorting and validation)."""
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != self.vals.shape:
            raise ValueError("value array length mismatch")
        out = object.__new__(SparseObserved)
        out.m, out.n = self.m, self.n
        out.rows, out.cols, out.vals = self.rows, self.cols, vals
        out.row_ptr = self.row_ptr
        out.csc_order, out.csc_rows, out.col_ptr = self.csc_order, self.csc_rows, self.col_ptr
        return out

    def matmat(self, w: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        w = np.ascontiguousarray(w, dtype=np.float64)
        if out is None:
            out = np.zeros((self.m, w.shape[1]))
        _kernels.csr_matmat(self.row_ptr, self.cols, self.vals, w, out, 0, self.m)
        return out

    def t_matmat(self, w: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        w = np.ascontiguousarray(w, dtype=np.float64)
        if out is None:
            out = np.zeros((self.n, w.shape[1]))
        _kernels.csc_matmat(self.col_ptr, self.csc_rows, self.csc_order, self.vals, w, out, 0, self.n)
        return out

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.m, self.n))
        a[self.rows, self.cols] = self.vals
        return a

    def frob_sq(self) -> float:
        return float(np.dot(self.vals, self.vals))


class SlrOperator(LinearOperator):
    """coef1 * low1 + coef2 * low2 + sparse, multiplied without densifying."""

    def __init__(self, m, n, coef1=0.0, low1: FactoredMatrix | None = None,
                 coef2=0.0, low2: FactoredMatrix | None = None,
                 sparse: SparseObserved | None = None, engine=None):
        self.shape = (int(m), int(n))
        self.coef1, self.low1 = float(coef1), low1
        self.coef2, self.low2 = float(coef2), low2
        self.sparse = sparse
        self.engine = engine
        for f in (low1, low2):
            if f is not None and f.shape != self.shape:
                raise ValueError("low-rank term shape mismatch")
        if sparse is not None and sparse.shape != self.shape:
            raise ValueError("sparse term shape mismatch")

    def _terms(self):
        out = []
        if self.low1 is not None and self.coef1 != 0.0 and self.low1.rank > 0:
            out.append((self.coef1, self.low1))
        if self.low2 is not None and self.coef2 != 0.0 and self.low2.rank > 0:
            out.append((self.coef2, self.low2))
        return out

    def matmat(self, w: np.ndarray) -> np.ndarray:
        if w.shape[0] != self.shape[1]:
            raise ValueError(f"operand has {w.shape[0]} rows, operator has {self.shape[1]} cols")
        w = np.ascontiguousarray(w, dtype=np.float64)
        eng = self.engine
        if eng is not None:
            return eng.slr_matmat(self, w)
        out = np.zeros((self.shape[0], w.shape[1]))
        for c, f in self._terms():
            out += c * f.matmat(w)
        if self.sparse is not None:
            self.sparse.matmat(w, out)
        return out

    def t_matmat(self, w: np.ndarray) -> np.ndarray:
        if w.shape[0] != self.shape[0]:
            raise ValueError(f"operand has {w.shape[0]} rows, operator has {self.shape[0]} rows")
        w = np.ascontiguousarray(w, dtype=np.float64)
        eng = self.engine
        if eng is not None:
            return eng.slr_t_matmat(self, w)
        out = np.zeros((self.shape[1], w.shape[1]))
        for c, f in self._terms():
            out += c * f.t_matmat(w)
        if self.sparse is not None:
            self.sparse.t_matmat(w, out)
        return out

    def to_dense(self) -> np.ndarray:
        a = np.zeros(self.shape)
        for c, f in self._terms():
            a += c * f.to_dense()
        if self.sparse is not None:
            a += self.sparse.to_dense()
        return a


def slr_right_mul(op: SlrOperator, w: np.ndarray) -> np.ndarray:
    """op @ w for a thin (n, k) block."""
    return op.matmat(w)


def slr_left_mul(op: SlrOperator, w: np.ndarray) -> np.ndarray:
    """op.T @ w for a thin (m, k) block."""
    return op.t_matmat(w)


def project_omega(
    x: FactoredMatrix | list[tuple[float, FactoredMatrix]],
    mask: SparseObserved,
    engine=None,
) -> np.ndarray:
    """Values of a factored matrix (or linear combination) at observed entries.

    Costs O(nnz * r).  Returns the value array aligned with the mask's
    canonical row-major entry order.
    """
    terms = x if isinstance(x, list) else [(1.0, x)]
    out = np.zeros(mask.nnz)
    for c, f in terms:
        if f.rank == 0 or c == 0.0:
            continue
        if f.shape != mask.shape:
            raise ValueError("factored matrix and mask shapes differ")
        us = np.ascontiguousarray(f.u * (c * f.s))
        v = np.ascontiguousarray(f.v)
        part = np.empty(mask.nnz)
        if engine is not None:
            engine.gather_factored(us, v, mask.rows, mask.cols, part)
        else:
            _kernels.gather_factored(us, v, mask.rows, mask.cols, part, 0, mask.nnz)
        out += part
    return out
