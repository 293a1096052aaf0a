"""Matrix completion under a spectral penalty, in sparse-plus-low-rank form.

The loss is 0.5 * ||P_Omega(X - O)||_F^2 over observed entries O, whose
gradient is 1-Lipschitz.  Iterates stay factored; the solver only ever sees
their values on Omega and their singular values, so no dense m x n array is
allocated anywhere in the fit path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .linalg import FactoredMatrix
from .penalties import PenaltySpec, penalty_spectrum
from .solver import SolverConfig, fancl, fancl_acc
from .sparse_ops import SlrOperator, SparseObserved, project_omega

__all__ = [
    "CompletionProblem",
    "McIterate",
    "mc_objective",
    "mc_grad_operator",
    "mc_fit",
    "mc_predict",
]


@dataclass
class McIterate:
    """A factored iterate plus its cached values on the observed pattern."""

    x: FactoredMatrix
    omega_vals: np.ndarray
    loss: float  # 0.5 * sum((omega_vals - O)^2)


class CompletionProblem:
    rho = 1.0

    def __init__(self, observed: SparseObserved, penalty: PenaltySpec, lam: float):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.observed = observed
        self.penalty = penalty
        self.lam = lam

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    def _loss_from_vals(self, vals: np.ndarray, engine=None) -> float:
        if engine is not None:
            return 0.5 * engine.sumsq_diff(vals, self.observed.vals)
        return 0.5 * _kernels.sumsq_diff(vals, self.observed.vals, 0, self.observed.nnz)

    def make_iterate(self, x: FactoredMatrix, engine=None) -> McIterate:
        vals = project_omega(x, self.observed, engine)
        return McIterate(x, vals, self._loss_from_vals(vals, engine))

    def objective(self, it: McIterate, lam_t: float, engine=None) -> float:
        return it.loss + penalty_spectrum(self.penalty, it.x.s, lam_t)

    def objective_combo(self, terms: list[tuple[float, McIterate]], lam_t: float, engine=None) -> float:
        """Objective at a linear combination of cached iterates.

        The combination's values on Omega are combined from the caches; its
        spectrum comes from an exact small SVD of the stacked factors.
        """
        from .linalg import compactify

        vals = sum(c * it.omega_vals for c, it in terms)
        live = [(c, it.x) for c, it in terms if c != 0.0 and it.x.rank > 0]
        if live:
            s = compactify(live).s
        else:
            s = np.zeros(0)
        return self._loss_from_vals(vals, engine) + penalty_spectrum(self.penalty, s, lam_t)

    def gradient_step(self, terms: list[tuple[float, FactoredMatrix]], tau: float, engine=None) -> SlrOperator:
        """Operator for Y - (1/tau) * P_Omega(Y - O) with Y = sum of terms."""
        y_vals = np.zeros(self.observed.nnz)
        for c, f in terms:
            if c != 0.0 and f.rank > 0:
                y_vals += c * project_omega(f, self.observed, engine)
        sparse = self.observed.with_values((self.observed.vals - y_vals) / tau)
        m, n = self.shape
        t = [(c, f) for c, f in terms if c != 0.0 and f.rank > 0]
        low1 = t[0] if len(t) > 0 else (0.0, None)
        low2 = t[1] if len(t) > 1 else (0.0, None)
        if len(t) > 2:
            raise ValueError("gradient step supports at most two low-rank terms")
        return SlrOperator(m, n, low1[0], low1[1], low2[0], low2[1], sparse, engine)


def mc_objective(prob: CompletionProblem, x: FactoredMatrix, lam: float | None = None,
                 omega_vals: np.ndarray | None = None) -> float:
    """0.5 * ||P_Omega(X - O)||^2 + penalty(spectrum of X) at weight lam."""
    lam = prob.lam if lam is None else lam
    if omega_vals is None:
        omega_vals = project_omega(x, prob.observed)
    return prob._loss_from_vals(omega_vals) + penalty_spectrum(prob.penalty, x.s, lam)


def mc_grad_operator(prob: CompletionProblem, x_cur: FactoredMatrix, tau: float,
                     x_prev: FactoredMatrix | None = None, beta: float = 0.0) -> SlrOperator:
    """Gradient-step operator at the extrapolated point (1+beta) X_t - beta X_{t-1}."""
    terms = [(1.0 + beta, x_cur)]
    if beta != 0.0:
        if x_prev is None:
            raise ValueError("beta != 0 requires the previous iterate")
        terms.append((-beta, x_prev))
    return prob.gradient_step(terms, tau)


def mc_fit(prob: CompletionProblem, cfg: SolverConfig | None = None,
           variant: str = "fancl-acc", engine=None):
    """Run the chosen solver variant; returns (FactoredMatrix, [IterationStats])."""
    cfg = dataclasses.replace(cfg or SolverConfig(), lam=prob.lam)
    if variant in ("fancl", "plain"):
        it, stats = fancl(prob, cfg, engine)
    elif variant in ("fancl-acc", "fancl_acc", "accelerated"):
        it, stats = fancl_acc(prob, cfg, engine)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return it.x, stats


def mc_predict(x: FactoredMatrix, coords) -> np.ndarray:
    """Entries of the factored matrix at (i, j) coordinate pairs."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords.reshape(1, 2)
    rows, cols = coords[:, 0], coords[:, 1]
    m, n = x.shape
    if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
        raise IndexError("coordinate out of bounds")
    return x.entries(rows, cols)
