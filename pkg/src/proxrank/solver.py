"""Inexact proximal solvers with continuation and optional acceleration.

Two outer loops are provided.  The plain loop repeats an inexact proximal
step from the current iterate; the accelerated loop first tries the step
from an extrapolated point and keeps it only when it decreases the
objective by at least (delta/2) * ||X_new - Y||_F^2, falling back to the
plain step otherwise, so the objective never increases.

Each proximal step is "inexact": the spectral prox is evaluated on an
approximate leading subspace and accepted once it achieves the decrease
F(X_new) <= F(X) - c1 * ||X_new - X||_F^2 with c1 = (tau - rho) / 4,
retrying with a refined subspace otherwise.  The accepted margins are
logged so every run's certificates can be re-verified afterwards.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import FactoredMatrix, combo_frob_dist_sq, approx_gsvt, inde_span
from .penalties import PenaltySpec

__all__ = [
    "SolverConfig",
    "IterationStats",
    "InexactPsStalled",
    "continuation_step",
    "inexact_ps",
    "fancl",
    "fancl_acc",
    "rate_certificate",
]


@dataclass
class SolverConfig:
    """Tunables shared by all solver variants.

    lambda0 = None derives the continuation start from the data: tau times
    a power-iteration estimate of the top singular value of the first
    gradient-step matrix, so the first iterations keep at most a handful of
    directions.  A fixed multiple of the target weight is usually far too
    small on sparsely observed problems and lets the rank blow up before
    the signal is fitted.
    """

    lam: float = 1.0
    tau: float = 1.05
    lambda0: float | None = None
    nu: float = 0.9
    decay_mode: str = "geometric"  # or "power": (lam0 - lam) * nu^t + lam
    delta: float = 1e-3
    power_iters: int = 3  # subspace refinement rounds per prox call
    p_max: int = 10
    max_iters: int = 500
    tol: float = 1e-4
    seed: int = 0
    slack_cols: int = 5
    permissive: bool = False  # accept the best inner iterate on stall instead of raising

    def validate(self, rho: float) -> None:
        if not self.tau > rho:
            raise ValueError(f"tau = {self.tau} must exceed rho = {rho}")
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must be in (0, 1), got {self.nu}")
        if self.lambda0 is not None and not self.lambda0 > self.lam:
            raise ValueError("lambda0 must exceed lam")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.decay_mode not in ("geometric", "power"):
            raise ValueError(f"unknown decay_mode {self.decay_mode!r}")

    def c1(self, rho: float) -> float:
        return (self.tau - rho) / 4.0


@dataclass
class IterationStats:
    t: int
    objective: float          # F at the accepted iterate, at this step's lambda_t
    objective_prev: float     # F at the branch's reference point (X_t)
    rank: int
    lam_t: float
    margin: float             # slack in the accepted decrease inequality
    branch: str               # "plain", "accelerated", or "fallback"
    inner_iters: int
    dist_sq: float            # ||X_{t+1} - C_t||_F^2 for the taken branch
    wall_ms: float
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "t": self.t,
            "objective": self.objective,
            "objective_prev": self.objective_prev,
            "rank": self.rank,
            "lam_t": self.lam_t,
            "margin": self.margin,
            "branch": self.branch,
            "inner_iters": self.inner_iters,
            "dist_sq": self.dist_sq,
            "wall_ms": self.wall_ms,
        }
        rec.update(self.extras)
        return rec


class InexactPsStalled(RuntimeError):
    """Inner proximal loop exhausted p_max without the required decrease."""

    def __init__(self, best, message="inexact proximal step stalled"):
        super().__init__(message)
        self.best = best  # (FactoredMatrix, warm-start block, p_used, f_new, dist_sq)


def continuation_step(lam_prev: float, lam: float, nu: float, t: int, decay_mode: str = "geometric") -> float:
    """Next continuation weight; decreases toward lam and never undershoots it."""
    if lam_prev < lam:
        raise ValueError("lam_prev must be >= lam")
    if decay_mode == "geometric":
        return (lam_prev - lam) * nu + lam
    if decay_mode == "power":
        return (lam_prev - lam) * nu**t + lam
    raise ValueError(f"unknown decay_mode {decay_mode!r}")


def inexact_ps(
    problem,
    base_terms: list[tuple[float, FactoredMatrix]],
    base_objective: float,
    warm: np.ndarray,
    lam_t: float,
    cfg: SolverConfig,
    engine=None,
):
    """One inexact proximal step from the (possibly extrapolated) base point.

    ``base_terms`` describes the point X the step starts from as a linear
    combination of factored iterates; ``base_objective`` is F at that point
    under lam_t.  Returns (iterate, warm_out, p_used, f_new, dist_sq) where
    ``iterate`` is whatever problem.make_iterate produces and ``warm_out``
    is the right-factor block to seed the next step's subspace.

    Raises InexactPsStalled after p_max refinements without the c1
    decrease, unless cfg.permissive accepts the best attempt with a warning.
    """
    c1 = cfg.c1(problem.rho)
    z = problem.gradient_step(base_terms, cfg.tau, engine)
    v = inde_span(np.ascontiguousarray(warm), engine)
    if v.shape[1] == 0:
        raise ValueError("warm start block is rank deficient")
    mu = lam_t / cfg.tau
    best = None
    for p in range(1, cfg.p_max + 1):
        x_new, v_full = approx_gsvt(z, v, mu, problem.penalty, cfg.power_iters, engine)
        iterate = problem.make_iterate(x_new, engine)
        f_new = problem.objective(iterate, lam_t, engine)
        dist_sq = combo_frob_dist_sq([(1.0, x_new)], base_terms)
        if best is None or f_new < best[3]:
            best = (iterate, v_full, p, f_new, dist_sq)
        if f_new <= base_objective - c1 * dist_sq:
            return iterate, v_full, p, f_new, dist_sq
        v = v_full if v_full.shape[1] else v
    if cfg.permissive:
        warnings.warn(
            f"inexact proximal step stalled after {cfg.p_max} refinements; keeping best attempt"
        )
        return best
    raise InexactPsStalled(best)


def _warm_block(iterate_x: FactoredMatrix, v_full: np.ndarray) -> np.ndarray:
    """Warm-start columns contributed by an accepted iterate.

    The accepted iterate's right factor (rank r) is used, keeping the outer
    recurrence rank(R_t) <= r_t + r_{t-1}; a rank-0 step falls back to the
    leading column of the full factor so the block never goes empty.
    """
    if iterate_x.rank > 0:
        return iterate_x.v
    if v_full.shape[1] > 0:
        return v_full[:, :1]
    raise AssertionError("empty warm-start block")


def _stack_warm(problem, v_cur, v_prev, saturated: bool, cfg: SolverConfig, rng) -> np.ndarray:
    r = np.hstack([v_cur, v_prev])
    if saturated and cfg.slack_cols > 0:
        # previous prox kept every computed direction, so the subspace may be
        # too small; widen it with fresh random directions
        n = r.shape[0]
        r = np.hstack([r, rng.standard_normal((n, cfg.slack_cols))])
    k = min(r.shape[1], min(problem.shape))
    return r[:, :k]


def _init_lambda0(problem, cfg: SolverConfig, engine, rng) -> float:
    if cfg.lambda0 is not None:
        return cfg.lambda0
    z = problem.gradient_step([(1.0, FactoredMatrix.zero(*problem.shape))], cfg.tau, engine)
    n = problem.shape[1]
    q = rng.standard_normal((n, 1))
    top = 0.0
    for _ in range(8):
        y = z.matmat(q)
        top = float(np.linalg.norm(y))
        if top == 0.0:
            break
        q = z.t_matmat(y / top)
        q /= max(np.linalg.norm(q), 1e-300)
    lam0 = 1.05 * cfg.tau * top
    return max(lam0, cfg.lam * (1.0 + 1e-6))


def _should_stop(f_prev, f_new, lam_t, cfg: SolverConfig) -> bool:
    # Never stop while continuation is still far from the target weight: the
    # objective is flat during an early all-thresholded phase even though
    # nothing has converged yet.
    if lam_t - cfg.lam > 1e-2 * cfg.lam:
        return False
    if f_prev is None:
        return False
    return abs(f_prev - f_new) <= cfg.tol * max(abs(f_prev), 1e-300)


def fancl(problem, cfg: SolverConfig, engine=None):
    """Plain inexact proximal loop with continuation.

    Returns (final iterate, [IterationStats]).  The final iterate is the
    problem-specific iterate object; its factored matrix is ``.x``.
    """
    cfg.validate(problem.rho)
    rng = np.random.default_rng(cfg.seed)
    m, n = problem.shape
    v_cur = rng.standard_normal((n, 1))
    v_prev = rng.standard_normal((n, 1))
    cur = problem.make_iterate(FactoredMatrix.zero(m, n), engine)
    lam_t = _init_lambda0(problem, cfg, engine, rng)
    stats: list[IterationStats] = []
    f_prev = None
    saturated = False
    for t in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        lam_t = continuation_step(lam_t, cfg.lam, cfg.nu, t, cfg.decay_mode)
        r = _stack_warm(problem, v_cur, v_prev, saturated, cfg, rng)
        f_base = problem.objective(cur, lam_t, engine)
        nxt, v_full, p_used, f_new, dist_sq = inexact_ps(
            problem, [(1.0, cur.x)], f_base, r, lam_t, cfg, engine
        )
        saturated = nxt.x.rank >= v_full.shape[1]
        v_cur, v_prev = _warm_block(nxt.x, v_full), v_cur
        cur = nxt
        stats.append(IterationStats(
            t=t, objective=f_new, objective_prev=f_base, rank=cur.x.rank, lam_t=lam_t,
            margin=(f_base - cfg.c1(problem.rho) * dist_sq) - f_new, branch="plain",
            inner_iters=p_used, dist_sq=dist_sq,
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))
        if _should_stop(f_prev, f_new, lam_t, cfg):
            break
        f_prev = f_new
    return cur, stats


def fancl_acc(problem, cfg: SolverConfig, engine=None):
    """Accelerated variant: extrapolate, test the decrease, else fall back.

    The extrapolated point Y_t = X_t + beta_t (X_t - X_{t-1}) is kept in
    factored-combination form and never densified.  A stalled proximal step
    from Y_t counts as a rejected extrapolation rather than an error.
    """
    cfg.validate(problem.rho)
    rng = np.random.default_rng(cfg.seed)
    m, n = problem.shape
    v_cur = rng.standard_normal((n, 1))
    v_prev = rng.standard_normal((n, 1))
    cur = problem.make_iterate(FactoredMatrix.zero(m, n), engine)
    prev = cur
    alpha_prev = alpha = 1.0
    lam_t = _init_lambda0(problem, cfg, engine, rng)
    stats: list[IterationStats] = []
    f_prev = None
    saturated = False
    for t in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        lam_t = continuation_step(lam_t, cfg.lam, cfg.nu, t, cfg.decay_mode)
        r = _stack_warm(problem, v_cur, v_prev, saturated, cfg, rng)
        beta = (alpha_prev - 1.0) / alpha
        y_terms = [(1.0 + beta, cur.x), (-beta, prev.x)]
        f_cur = problem.objective(cur, lam_t, engine)
        f_y = f_cur if beta == 0.0 else problem.objective_combo(
            [(1.0 + beta, cur), (-beta, prev)], lam_t, engine
        )
        branch = "accelerated"
        try:
            cand, v_full, p_used, f_cand, _ = inexact_ps(
                problem, y_terms, f_y, r, lam_t, cfg, engine
            )
            acc_dist_sq = combo_frob_dist_sq([(1.0, cand.x)], y_terms)
            accept = f_cand <= f_cur - 0.5 * cfg.delta * acc_dist_sq
        except InexactPsStalled:
            accept = False
        if accept:
            nxt, dist_sq, f_new = cand, acc_dist_sq, f_cand
            margin = (f_cur - 0.5 * cfg.delta * dist_sq) - f_new
        else:
            branch = "fallback"
            nxt, v_full, p_used, f_new, dist_sq = inexact_ps(
                problem, [(1.0, cur.x)], f_cur, r, lam_t, cfg, engine
            )
            margin = (f_cur - cfg.c1(problem.rho) * dist_sq) - f_new
        saturated = nxt.x.rank >= v_full.shape[1]
        v_cur, v_prev = _warm_block(nxt.x, v_full), v_cur
        prev, cur = cur, nxt
        alpha_prev, alpha = alpha, 0.5 * (np.sqrt(4.0 * alpha * alpha + 1.0) + 1.0)
        stats.append(IterationStats(
            t=t, objective=f_new, objective_prev=f_cur, rank=cur.x.rank, lam_t=lam_t,
            margin=margin, branch=branch, inner_iters=p_used, dist_sq=dist_sq,
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))
        if _should_stop(f_prev, f_new, lam_t, cfg):
            break
        f_prev = f_new
    return cur, stats


def rate_certificate(stats: list[IterationStats], c1: float, delta: float | None = None) -> dict:
    """Check the telescoped decrease bound on a completed run.

    Asserts min_t ||X_{t+1} - C_t||_F^2 <= (F_1 - F_{T+1}) / (coef * T)
    with coef = c1 when every step is plain and min(c1, delta/2) otherwise,
    where C_t is the extrapolated point on accelerated steps and X_t
    otherwise.  Returns a report dict with the bound, the attained minimum,
    and pass/fail.
    """
    if not stats:
        raise ValueError("empty run")
    coef = c1
    if any(s.branch == "accelerated" for s in stats):
        if delta is None:
            raise ValueError("delta required for runs with accelerated steps")
        coef = min(c1, delta / 2.0)
    t_count = len(stats)
    f_start = stats[0].objective_prev
    f_end = stats[-1].objective
    bound = (f_start - f_end) / (coef * t_count)
    attained = min(s.dist_sq for s in stats)
    return {
        "passed": bool(attained <= bound * (1.0 + 1e-9) + 1e-15),
        "min_dist_sq": attained,
        "bound": bound,
        "margin": bound - attained,
        "iterations": t_count,
    }
