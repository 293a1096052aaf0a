"""Scalar spectral penalties, their proximal maps, and zeroing thresholds.

Every supported penalty acts on a nonnegative scalar (a singular value, or
the magnitude of a matrix entry for the element-wise case) and is scaled by
a per-call parameter ``mu``.  The proximal map

    prox(sigma) = argmin_{y >= 0}  0.5 * (y - sigma)**2 + penalty(y; mu)

has a closed form for all kinds here.  Rather than transcribing piecewise
formulas, we enumerate the stationary point of each smooth piece (clamped to
the piece) plus the piece boundaries, and pick the candidate with the lowest
objective.  ``prox_scalar_oracle`` is a brute-force grid minimizer used to
certify the closed forms in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "PenaltyKind",
    "PenaltySpec",
    "penalty_value",
    "penalty_spectrum",
    "prox_scalar",
    "prox_array",
    "threshold_gamma",
    "prox_scalar_oracle",
]


class PenaltyKind(str, Enum):
    CAPPED_L1 = "capped-l1"
    LSP = "lsp"
    TNN = "tnn"
    SCAD = "scad"
    MCP = "mcp"
    NUCLEAR = "nuclear"
    L1 = "l1"


# Kinds whose scalar penalty is mu * |y| (soft threshold prox).
_SOFT_KINDS = (PenaltyKind.NUCLEAR, PenaltyKind.L1)


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty kind plus its shape parameter theta.

    The scale ``mu`` is not stored; it is passed per call because solvers
    evaluate the same penalty at many different scales (continuation, and
    the 1/tau factor inside proximal steps).

    theta constraints: SCAD needs theta > 2; TNN needs a positive integer
    (the number of leading singular values left unpenalized); capped-L1,
    LSP and MCP need theta > 0.  Nuclear and L1 ignore theta.
    """

    kind: PenaltyKind
    theta: float = 1.0

    def __post_init__(self):
        k = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", k)
        if k in _SOFT_KINDS:
            return
        if k == PenaltyKind.SCAD:
            if not self.theta > 2:
                raise ValueError(f"SCAD requires theta > 2, got {self.theta}")
        elif k == PenaltyKind.TNN:
            if self.theta < 1 or self.theta != int(self.theta):
                raise ValueError(f"TNN requires integer theta >= 1, got {self.theta}")
        elif not self.theta > 0:
            raise ValueError(f"{k.value} requires theta > 0, got {self.theta}")

    @property
    def tnn_cutoff(self) -> int:
        """Number of unpenalized leading singular values (TNN only)."""
        return int(self.theta)


def _check_mu(mu: float) -> None:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")


def penalty_value(spec: PenaltySpec, sigma: float, mu: float, index: int | None = None) -> float:
    """Penalty at a single nonnegative scalar, scaled by mu.

    ``index`` is the 1-based position of the singular value and only matters
    for TNN: positions <= theta are unpenalized.  ``index=None`` means
    "penalized" (the generic tail position).
    """
    _check_mu(mu)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if spec.kind == PenaltyKind.TNN:
        if index is not None and index <= spec.tnn_cutoff:
            return 0.0
        return mu * sigma
    return float(_penalty_array(spec, np.asarray([sigma], dtype=float), mu)[0])


def _penalty_array(spec: PenaltySpec, y: np.ndarray, mu: float) -> np.ndarray:
    """Vectorized penalty for the index-free kinds (TNN treated as penalized)."""
    th = spec.theta
    k = spec.kind
    if k == PenaltyKind.CAPPED_L1:
        return mu * np.minimum(y, th)
    if k == PenaltyKind.LSP:
        return mu * np.log1p(y / th)
    if k == PenaltyKind.SCAD:
        mid = (-y * y + 2.0 * th * mu * y - mu * mu) / (2.0 * (th - 1.0))
        return np.where(y <= mu, mu * y, np.where(y <= th * mu, mid, 0.5 * (th + 1.0) * mu * mu))
    if k == PenaltyKind.MCP:
        return np.where(y <= th * mu, mu * y - y * y / (2.0 * th), 0.5 * th * mu * mu)
    # nuclear / l1 / tnn tail
    return mu * y


def penalty_spectrum(spec: PenaltySpec, sigmas: np.ndarray, mu: float) -> float:
    """Total penalty over a descending spectrum of singular values.

    Handles TNN's positional rule; for the other kinds this is just the sum
    of per-value penalties.
    """
    _check_mu(mu)
    s = np.asarray(sigmas, dtype=float)
    if s.size == 0:
        return 0.0
    if spec.kind == PenaltyKind.TNN:
        return float(mu * s[spec.tnn_cutoff:].sum())
    return float(_penalty_array(spec, s, mu).sum())


def _prox_candidates(spec: PenaltySpec, s: np.ndarray, mu: float) -> np.ndarray:
    """Columns of candidate minimizers for each sigma in ``s`` (penalized branch)."""
    th = spec.theta
    k = spec.kind
    zero = np.zeros_like(s)
    if k in _SOFT_KINDS or k == PenaltyKind.TNN:
        return np.stack([zero, np.maximum(s - mu, 0.0)], axis=1)
    if k == PenaltyKind.CAPPED_L1:
        return np.stack([zero, np.clip(s - mu, 0.0, th), np.maximum(s, th),
                         np.full_like(s, th)], axis=1)
    if k == PenaltyKind.LSP:
        # stationary points solve y^2 + (theta - s) y + (mu - s*theta) = 0
        b = th - s
        disc = b * b - 4.0 * (mu - s * th)
        r = np.sqrt(np.maximum(disc, 0.0))
        ok = disc >= 0
        y1 = np.where(ok, np.maximum((-b + r) / 2.0, 0.0), 0.0)
        y2 = np.where(ok, np.maximum((-b - r) / 2.0, 0.0), 0.0)
        return np.stack([zero, y1, y2], axis=1)
    if k == PenaltyKind.SCAD:
        y_mid = ((th - 1.0) * s - th * mu) / (th - 2.0)
        return np.stack([zero, np.clip(s - mu, 0.0, mu), np.full_like(s, mu),
                         np.clip(y_mid, mu, th * mu), np.full_like(s, th * mu),
                         np.maximum(s, th * mu)], axis=1)
    if k == PenaltyKind.MCP:
        if abs(th - 1.0) > 1e-12:
            y_lo = np.clip(th * (s - mu) / (th - 1.0), 0.0, th * mu)
        else:
            y_lo = zero  # piece is linear; endpoints cover it
        return np.stack([zero, y_lo, np.full_like(s, th * mu), np.maximum(s, th * mu)], axis=1)
    raise ValueError(f"unknown penalty kind {k}")


def prox_array(spec: PenaltySpec, sigmas: np.ndarray, mu: float) -> np.ndarray:
    """Vectorized proximal map over nonnegative values (penalized branch).

    Ties between equal-objective candidates are broken toward the larger
    minimizer, deterministically.
    """
    _check_mu(mu)
    s = np.asarray(sigmas, dtype=float)
    if s.size == 0:
        return s.copy()
    if np.any(s < 0):
        raise ValueError("sigmas must be nonnegative")
    cand = _prox_candidates(spec, s, mu)
    h = 0.5 * (cand - s[:, None]) ** 2 + _penalty_array(spec, cand, mu)
    hmin = h.min(axis=1, keepdims=True)
    # larger-root tie-break: take the largest candidate attaining the minimum
    return np.where(h <= hmin, cand, -np.inf).max(axis=1)


def prox_scalar(spec: PenaltySpec, sigma: float, mu: float, index: int | None = None) -> float:
    """Global minimizer of 0.5*(y - sigma)^2 + penalty(y; mu) over y >= 0.

    For TNN, ``index`` selects the positional branch as in ``penalty_value``;
    an unpenalized position returns sigma unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if spec.kind == PenaltyKind.TNN and index is not None and index <= spec.tnn_cutoff:
        _check_mu(mu)
        return float(sigma)
    return float(prox_array(spec, np.asarray([sigma], dtype=float), mu)[0])


def threshold_gamma(spec: PenaltySpec, mu: float, sigma_aux: float | None = None) -> float:
    """Threshold below which the scalar prox is exactly zero.

    For TNN the threshold depends on the spectrum: ``sigma_aux`` must be the
    (theta+1)-th singular value of the matrix being thresholded.
    """
    _check_mu(mu)
    th = spec.theta
    k = spec.kind
    if k == PenaltyKind.CAPPED_L1:
        return float(min(np.sqrt(2.0 * th * mu), mu))
    if k == PenaltyKind.LSP:
        return float(min(mu / th, th))
    if k == PenaltyKind.TNN:
        if sigma_aux is None:
            raise ValueError("TNN threshold needs sigma_aux = (theta+1)-th singular value")
        return float(max(mu, sigma_aux))
    if k == PenaltyKind.SCAD:
        return float(mu)
    if k == PenaltyKind.MCP:
        return float(np.sqrt(th) * mu if th < 1.0 else mu)
    return float(mu)  # nuclear / l1


def prox_scalar_oracle(spec: PenaltySpec, sigma: float, mu: float, grid_step: float = 1e-5) -> float:
    """Brute-force grid minimizer of the scalar prox objective (test oracle).

    Scans y in {0, step, ..., sigma + 2*step}; the minimizer never exceeds
    sigma because the penalty is non-decreasing.  Ties go to the larger grid
    point, matching the closed form's tie rule.
    """
    _check_mu(mu)
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    grid = np.arange(0.0, sigma + 2.0 * grid_step, grid_step)
    h = 0.5 * (grid - sigma) ** 2 + _penalty_array(spec, grid, mu)
    idx = len(h) - 1 - int(np.argmin(h[::-1]))
    return float(grid[idx])
