"""Factored matrices, power-method subspace iteration, and approximate
generalized singular value thresholding (GSVT).

The GSVT of an operator Z under a spectral penalty applies the scalar prox
to each singular value.  Because every supported penalty zeroes singular
values below a threshold, only the leading subspace of Z is needed; a few
power iterations with a warm start recover it cheaply, and the prox is then
computed on the small projected matrix Q^T Z.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .penalties import PenaltyKind, PenaltySpec, prox_array, threshold_gamma

__all__ = [
    "FactoredMatrix",
    "LinearOperator",
    "DenseOperator",
    "power_method",
    "inde_span",
    "svd_via_span",
    "approx_gsvt",
    "exact_gsvt_oracle",
    "compactify",
    "combo_frob_dist_sq",
    "frob_dist_sq",
]

# Relative cutoff under which a Gram eigenvalue counts as rank-deficient.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class FactoredMatrix:
    """A rank-r matrix stored as U @ diag(s) @ V.T with orthonormal U, V.

    ``s`` is nonnegative and descending.  r = 0 (empty factors) represents
    the zero matrix.
    """

    u: np.ndarray  # (m, r)
    s: np.ndarray  # (r,)
    v: np.ndarray  # (n, r)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    @classmethod
    def zero(cls, m: int, n: int) -> "FactoredMatrix":
        return cls(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))

    @classmethod
    def from_dense(cls, a: np.ndarray, tol: float = 0.0) -> "FactoredMatrix":
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        keep = s > (tol if tol > 0 else RANK_TOL * (s[0] if s.size else 1.0))
        return cls(u[:, keep], s[keep], vt[keep].T)

    def to_dense(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(self.shape)
        return (self.u * self.s) @ self.v.T

    def matmat(self, w: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((self.shape[0], w.shape[1]))
        return (self.u * self.s) @ (self.v.T @ w)

    def t_matmat(self, w: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((self.shape[1], w.shape[1]))
        return (self.v * self.s) @ (self.u.T @ w)

    def entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Values at coordinate pairs, O(r) each."""
        if self.rank == 0:
            return np.zeros(len(rows))
        return np.einsum("ij,ij->i", self.u[rows] * self.s, self.v[cols])

    def frob_sq(self) -> float:
        return float(np.dot(self.s, self.s))

    def check(self, tol: float = 1e-10) -> None:
        """Assert the orthonormality and ordering invariants (test helper)."""
        r = self.rank
        if r:
            assert np.allclose(self.u.T @ self.u, np.eye(r), atol=tol)
            assert np.allclose(self.v.T @ self.v, np.eye(r), atol=tol)
            assert np.all(np.diff(self.s) <= 1e-12)
            assert np.all(self.s >= 0)


class LinearOperator:
    """Minimal operator protocol: right/left multiplication by thin matrices."""

    shape: tuple[int, int]

    def matmat(self, w: np.ndarray) -> np.ndarray:  # Z @ w, w is (n, k)
        raise NotImplementedError

    def t_matmat(self, w: np.ndarray) -> np.ndarray:  # Z.T @ w, w is (m, k)
        raise NotImplementedError


class DenseOperator(LinearOperator):
    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        self.shape = self.a.shape

    def matmat(self, w):
        return self.a @ w

    def t_matmat(self, w):
        return self.a.T @ w


def _gram_orth(b: np.ndarray, engine=None) -> np.ndarray:
    """One Gram-based orthonormalization pass: b @ V @ diag(w)^(-1/2).

    Columns whose Gram eigenvalue falls below RANK_TOL * max are dropped.
    """
    if b.shape[1] == 0:
        return b
    g = engine.gram(b) if engine is not None else b.T @ b
    _, sig, vt = np.linalg.svd(g)
    top = sig[0] if sig.size else 0.0
    if top <= 0.0:
        return b[:, :0]
    keep = sig > RANK_TOL * top
    scale = vt[keep].T / np.sqrt(sig[keep])
    if engine is not None:
        return engine.matmul_rows(b, scale)
    return b @ scale


def inde_span(b: np.ndarray, engine=None) -> np.ndarray:
    """Orthonormal basis of span(b) via the Gram matrix of b.

    Needs only a k x k SVD plus two thin multiplies, so every large
    operation is a row-parallel matmul.  A second pass refines the basis:
    one Gram pass loses orthogonality like eps * cond(b)^2, which is not
    tolerable after repeated power iterations.
    """
    q = _gram_orth(np.asarray(b, dtype=float), engine)
    if q.shape[1] == 0:
        return q
    return _gram_orth(q, engine)


def svd_via_span(b: np.ndarray, engine=None) -> FactoredMatrix:
    """Thin SVD of a tall matrix from its span basis plus a small SVD.

    With p = inde_span(b), the SVD of p.T @ b (k x k) lifts to the SVD of b.
    """
    b = np.asarray(b, dtype=float)
    p = inde_span(b, engine)
    if p.shape[1] == 0:
        return FactoredMatrix.zero(*b.shape)
    core = p.T @ b
    uc, s, vt = np.linalg.svd(core, full_matrices=False)
    keep = s > RANK_TOL * (s[0] if s.size else 1.0)
    if engine is not None:
        left = engine.matmul_rows(p, uc[:, keep])
    else:
        left = p @ uc[:, keep]
    return FactoredMatrix(left, s[keep], vt[keep].T)


def power_method(z: LinearOperator, r: np.ndarray, n_iter: int = 3, engine=None) -> np.ndarray:
    """Orthonormal basis approximating the leading left subspace of z.

    Alternates y <- z @ (z.T @ q) with re-orthonormalization, starting from
    the warm-start block r (n x k).  Returns an m x k' basis with k' <= k;
    columns that collapse (rank-deficient warm starts) are dropped.
    """
    m, n = z.shape
    k = r.shape[1]
    if k > min(m, n):
        warnings.warn(f"power method block size {k} clamped to min(m, n) = {min(m, n)}")
        r = r[:, : min(m, n)]
    if r.shape[1] == 0:
        raise ValueError("warm start must have at least one column")
    y = z.matmat(r)
    for j in range(n_iter):
        q = inde_span(y, engine)
        if q.shape[1] == 0:
            return q
        if j < n_iter - 1:
            y = z.matmat(z.t_matmat(q))
    return q


def _tnn_prox_spectrum(spec: PenaltySpec, s: np.ndarray, mu: float) -> np.ndarray:
    """Per-position prox for the truncated penalty on a descending spectrum.

    Leading positions up to the cutoff pass through; the tail is
    soft-thresholded.  The count rule from the zeroing threshold alone would
    never keep more than ``cutoff`` values, which contradicts the exact prox
    whenever tail values exceed mu, so the positional rule is applied to the
    whole computed spectrum instead.
    """
    cut = spec.tnn_cutoff
    y = s.copy()
    y[cut:] = np.maximum(s[cut:] - mu, 0.0)
    return y


def approx_gsvt(
    z: LinearOperator,
    r: np.ndarray,
    mu: float,
    spec: PenaltySpec,
    n_iter: int = 3,
    engine=None,
) -> tuple[FactoredMatrix, np.ndarray]:
    """Approximate spectral prox of z, plus the full right factor for warm starts.

    Runs the power method from the warm start r, computes the exact SVD of
    the projected matrix q.T @ z, zeroes singular values at or below the
    penalty's threshold, and applies the scalar prox to the survivors.
    Returns (prox result as a FactoredMatrix, right singular block of
    q.T @ z with all k columns).
    """
    if spec.kind == PenaltyKind.TNN and r.shape[1] < spec.tnn_cutoff + 1:
        raise ValueError(
            f"TNN needs a warm start with at least theta+1 = {spec.tnn_cutoff + 1} columns"
        )
    m, n = z.shape
    q = power_method(z, r, n_iter, engine)
    if q.shape[1] == 0:
        return FactoredMatrix.zero(m, n), np.zeros((n, 0))
    b = z.t_matmat(q)  # (n, k); q.T @ z = b.T
    if engine is not None:
        fb = svd_via_span(b, engine)
        right_full, s, left_small = fb.u, fb.s, fb.v  # b = right_full s left_small^T
    else:
        right_full, s, left_small_t = np.linalg.svd(b, full_matrices=False)
        left_small = left_small_t.T
    if spec.kind == PenaltyKind.TNN:
        ys = _tnn_prox_spectrum(spec, s, mu)
    else:
        gamma = threshold_gamma(spec, mu)
        a = int(np.sum(s > gamma))
        ys = np.zeros_like(s)
        if a:
            ys[:a] = prox_array(spec, s[:a], mu)
    keep = ys > 0
    if not np.any(keep):
        return FactoredMatrix.zero(m, n), right_full
    if engine is not None:
        u_out = engine.matmul_rows(q, left_small[:, keep])
    else:
        u_out = q @ left_small[:, keep]
    return FactoredMatrix(u_out, ys[keep], right_full[:, keep]), right_full


def exact_gsvt_oracle(z: np.ndarray, mu: float, spec: PenaltySpec) -> np.ndarray:
    """Exact spectral prox via a full dense SVD (reference path for tests)."""
    z = np.asarray(z, dtype=float)
    u, s, vt = np.linalg.svd(z, full_matrices=False)
    if spec.kind == PenaltyKind.TNN:
        ys = _tnn_prox_spectrum(spec, s, mu)
    else:
        ys = prox_array(spec, s, mu)
    return (u * ys) @ vt


def compactify(terms: list[tuple[float, FactoredMatrix]]) -> FactoredMatrix:
    """Exact SVD of a linear combination of factored matrices.

    Stacks the factors, orthonormalizes each side, and takes a small SVD of
    the core, so the cost stays O((m + n) k^2) for total stacked rank k.
    """
    terms = [(c, f) for c, f in terms if c != 0.0 and f.rank > 0]
    if not terms:
        raise ValueError("compactify needs at least one nonzero term with known shape")
    m, n = terms[0][1].shape
    uc = np.hstack([f.u for _, f in terms])
    vc = np.hstack([f.v for _, f in terms])
    w = np.concatenate([c * f.s for c, f in terms])
    qu = inde_span(uc)
    qv = inde_span(vc)
    if qu.shape[1] == 0 or qv.shape[1] == 0:
        return FactoredMatrix.zero(m, n)
    core = (qu.T @ uc) * w @ (qv.T @ vc).T
    u2, s, vt2 = np.linalg.svd(core, full_matrices=False)
    keep = s > RANK_TOL * (s[0] if s.size else 1.0)
    return FactoredMatrix(qu @ u2[:, keep], s[keep], qv @ vt2[keep].T)


def _pair_trace(a: FactoredMatrix, b: FactoredMatrix) -> float:
    """trace(A^T B) through the r_a x r_b factor Grams."""
    if a.rank == 0 or b.rank == 0:
        return 0.0
    gu = a.u.T @ b.u
    gv = a.v.T @ b.v
    return float(np.einsum("ij,ij->", gu * a.s[:, None] * b.s[None, :], gv))


def combo_frob_dist_sq(
    terms_a: list[tuple[float, FactoredMatrix]],
    terms_b: list[tuple[float, FactoredMatrix]],
) -> float:
    """|| sum_a c_i A_i - sum_b d_j B_j ||_F^2 without densifying anything."""
    total = 0.0
    for ca, fa in terms_a:
        for cb, fb in terms_a:
            total += ca * cb * _pair_trace(fa, fb)
    for ca, fa in terms_b:
        for cb, fb in terms_b:
            total += ca * cb * _pair_trace(fa, fb)
    for ca, fa in terms_a:
        for cb, fb in terms_b:
            total -= 2.0 * ca * cb * _pair_trace(fa, fb)
    return max(total, 0.0)


def frob_dist_sq(a: FactoredMatrix, b: FactoredMatrix) -> float:
    """Squared Frobenius distance between two factored matrices."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return combo_frob_dist_sq([(1.0, a)], [(1.0, b)])
