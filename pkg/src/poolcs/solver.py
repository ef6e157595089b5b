"""In-house solvers for the weighted l1-penalized least-squares problem.

Both algorithms minimize

    ||y~ - A~ x||_2^2 + gamma * sum_k beta_k |x_k|

over x in R^p (optionally x >= 0). FISTA is the workhorse; cyclic coordinate
descent is an independent second route used to cross-certify solutions.
Every converged result carries a subgradient optimality residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import spectral_norm_sq
from .weights import WeightSet

_TINY = 1e-300


@dataclass(frozen=True)
class LassoProblem:
    """One penalized least-squares instance on the surrogate system.

    The estimator theory assumes gamma > 2; the solver itself only requires
    gamma > 0 and nonnegative weights.
    """

    a_tilde: np.ndarray
    y_tilde: np.ndarray
    weights: WeightSet
    gamma: float

    def __post_init__(self):
        a = np.asarray(self.a_tilde, dtype=np.float64)
        y = np.asarray(self.y_tilde, dtype=np.float64)
        if a.ndim != 2 or y.ndim != 1 or y.shape[0] != a.shape[0]:
            raise ParameterError("need a_tilde (n x p) and y_tilde of length n")
        if not (np.isfinite(a).all() and np.isfinite(y).all()):
            raise ParameterError("problem data must be finite")
        if not self.gamma > 0.0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        pen = self.weights.penalties(a.shape[1])
        if not np.isfinite(pen).all() or (pen < 0.0).any():
            raise ParameterError("weights must be finite and nonnegative")
        object.__setattr__(self, "a_tilde", a)
        object.__setattr__(self, "y_tilde", y)

    @property
    def p(self) -> int:
        return self.a_tilde.shape[1]

    def penalty(self) -> np.ndarray:
        """Effective per-coordinate penalty gamma * beta_k."""
        return self.gamma * self.weights.penalties(self.p)


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 50000
    tol_obj: float = 1e-10   # relative objective change
    tol_kkt: float = 1e-8    # subgradient residual, absolute
    nonnegative: bool = False
    algorithm: str = "fista"
    lipschitz: float | None = None  # optional precomputed 2 * spectral_norm_sq(a_tilde)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError("max_iter must be at least 1")
        if self.tol_obj <= 0.0 or self.tol_kkt <= 0.0:
            raise ParameterError("tolerances must be positive")
        if self.algorithm not in ("fista", "coordinate_descent"):
            raise ParameterError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class SolverResult:
    x_hat: np.ndarray
    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0), elementwise; t must be nonnegative."""
    t_arr = np.asarray(t, dtype=np.float64)
    if (t_arr < 0.0).any():
        raise ParameterError("threshold must be nonnegative")
    out = np.sign(v) * np.maximum(np.abs(v) - t_arr, 0.0)
    return float(out) if np.isscalar(v) else out


def objective(problem: LassoProblem, x) -> float:
    """||y~ - A~ x||^2 + sum_k gamma beta_k |x_k|."""
    x = np.asarray(x, dtype=np.float64)
    r = problem.y_tilde - problem.a_tilde @ x
    return float(r @ r) + float((problem.penalty() * np.abs(x)).sum())


def kkt_residual(problem: LassoProblem, x, nonnegative: bool = False) -> float:
    """Max subgradient optimality violation at x.

    With g = 2 A~^T (A~ x - y~): |g_k + pen_k sign(x_k)| on the support and
    max(|g_k| - pen_k, 0) off it. In nonnegative mode the off-support
    condition is one-sided, max(-(g_k + pen_k), 0).
    """
    x = np.asarray(x, dtype=np.float64)
    g = 2.0 * (problem.a_tilde.T @ (problem.a_tilde @ x - problem.y_tilde))
    pen = problem.penalty()
    if nonnegative:
        res = np.where(x > 0.0, np.abs(g + pen), np.maximum(-(g + pen), 0.0))
    else:
        res = np.where(
            x != 0.0, np.abs(g + pen * np.sign(x)), np.maximum(np.abs(g) - pen, 0.0)
        )
    return float(res.max())


def _objective_given_pen(a, y, pen, x) -> float:
    r = y - a @ x
    return float(r @ r) + float((pen * np.abs(x)).sum())


def _prox(v, t, nonnegative):
    if nonnegative:
        return np.maximum(v - t, 0.0)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def solve_fista(problem: LassoProblem, config: SolverConfig, x0=None) -> SolverResult:
    """Accelerated proximal gradient with fixed step 1/L and restart on ascent.

    L = 2 * spectral_norm_sq(A~) (power iteration at tolerance 1e-10) unless
    a precomputed value is supplied. Converged means the relative objective
    change dropped below tol_obj and the subgradient residual below tol_kkt;
    hitting max_iter returns converged=False rather than raising.
    """
    a, y = problem.a_tilde, problem.y_tilde
    pen = problem.penalty()
    p = problem.p
    lip = config.lipschitz
    if lip is None:
        lip = 2.0 * spectral_norm_sq(a, tol=1e-10)
    if lip <= 0.0:
        # zero operator: the quadratic term is constant and 0 minimizes the penalty
        x = np.zeros(p)
        return SolverResult(
            x_hat=x,
            iterations=0,
            final_objective=_objective_given_pen(a, y, pen, x),
            kkt_residual=kkt_residual(problem, x, config.nonnegative),
            converged=True,
        )
    # small margin keeps the step strictly below 1/L despite the iterative estimate
    step = 1.0 / (lip * (1.0 + 1e-6))
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    z = x.copy()
    t = 1.0
    f = _objective_given_pen(a, y, pen, x)
    converged = False
    kkt = None
    allow_ascent = False
    it = 0
    while it < config.max_iter:
        it += 1
        grad = 2.0 * (a.T @ (a @ z - y))
        xn = _prox(z - step * grad, step * pen, config.nonnegative)
        fn = _objective_given_pen(a, y, pen, xn)
        if fn > f and not allow_ascent:
            # restart the momentum from the best point seen
            z = x.copy()
            t = 1.0
            allow_ascent = True
            continue
        allow_ascent = False
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = xn + ((t - 1.0) / tn) * (xn - x)
        rel = abs(f - fn) / max(abs(fn), _TINY)
        x, t, f = xn, tn, fn
        if rel <= config.tol_obj:
            kkt = kkt_residual(problem, x, config.nonnegative)
            if kkt <= config.tol_kkt:
                converged = True
                break
    if kkt is None:
        kkt = kkt_residual(problem, x, config.nonnegative)
    return SolverResult(
        x_hat=x, iterations=it, final_objective=f, kkt_residual=kkt, converged=converged
    )


def solve_coordinate_descent(
    problem: LassoProblem, config: SolverConfig, x0=None
) -> SolverResult:
    """Cyclic exact coordinate minimization; the objective never increases.

    iterations counts full sweeps over the p coordinates. Stopping rule and
    result contract match solve_fista.
    """
    a, y = problem.a_tilde, problem.y_tilde
    pen = problem.penalty()
    p = problem.p
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    col_sq = (a * a).sum(axis=0)
    r = y - a @ x
    f = _objective_given_pen(a, y, pen, x)
    converged = False
    kkt = None
    sweep = 0
    while sweep < config.max_iter:
        sweep += 1
        for k in range(p):
            ck = col_sq[k]
            if ck == 0.0:
                x[k] = 0.0  # zero column: residual unaffected, penalty prefers 0
                continue
            ak = a[:, k]
            rho = float(ak @ r) + ck * x[k]
            if config.nonnegative:
                xk = max((rho - 0.5 * pen[k]) / ck, 0.0)
            else:
                xk = math.copysign(max(abs(rho) - 0.5 * pen[k], 0.0), rho) / ck
            d = xk - x[k]
            if d != 0.0:
                r -= d * ak
                x[k] = xk
        r = y - a @ x  # refresh accumulated residual rounding once per sweep
        fn = _objective_given_pen(a, y, pen, x)
        rel = abs(f - fn) / max(abs(fn), _TINY)
        f = fn
        if rel <= config.tol_obj:
            kkt = kkt_residual(problem, x, config.nonnegative)
            if kkt <= config.tol_kkt:
                converged = True
                break
    if kkt is None:
        kkt = kkt_residual(problem, x, config.nonnegative)
    return SolverResult(
        x_hat=x, iterations=sweep, final_objective=f, kkt_residual=kkt, converged=converged
    )


def solve(problem: LassoProblem, config: SolverConfig, x0=None) -> SolverResult:
    if config.algorithm == "coordinate_descent":
        return solve_coordinate_descent(problem, config, x0=x0)
    return solve_fista(problem, config, x0=x0)
