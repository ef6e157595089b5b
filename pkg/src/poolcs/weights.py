"""Data-dependent penalty weights with finite-sample guarantees.

The penalty weights are built so that, with high probability, they dominate
every coordinate of the surrogate gradient at the true signal,
|(A~^T (y~ - A~ x*))_k|. The ingredients are all computable from (A, y, q):

- tail_correction(theta, n): the price of bounding all n noise factors at
  once, ln(1 / (1 - (1 - e^(-theta))^(1/n))).
- bernstein_radius(n, q, theta): deviation radius for Bernoulli column sums,
  sqrt(2 n q (1-q) theta) + max(q, 1-q) theta / 3.
- l1_norm_estimate: a high-probability overestimate of ||x*||_1 built from
  sum(y) and sqrt(sum(y^2)).
- direction_matrices / peak_pooled_energy: the matrix R mapping raw residuals
  to surrogate-gradient coordinates, its elementwise square, and the worst
  pooled energy W = max (R_sq^T A).

The uniform weight is
    beta = kappa L sqrt(2 theta W)
         + c (theta/n + max(q^2,(1-q)^2) theta^2 / (n^2 q (1-q))) L
with L the l1 estimate and kappa = sigma ln(1+q_a); the per-coordinate
weights replace the first term by sqrt(R_sq_k^T y^2) kappa sqrt(2 theta) /
(1 - kappa sqrt(2 g(theta))). Both use theta = 3 ln p by default and the
constant c = 126, valid for n >= 20.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AssumptionError, ParameterError
from .pooling import PoolingMatrix
from .simulate import NoiseParams

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class WeightParams:
    """Everything the weight formulas need besides (A, y).

    theta defaults to 3 ln p. The constant c defaults to 126, which is valid
    for n >= 20; the assumption report flags smaller n.
    """

    n: int
    p: int
    q: float
    noise: NoiseParams
    theta: float | None = None
    c_const: float = 126.0

    def __post_init__(self):
        if self.n < 1 or self.p < 2:
            raise ParameterError("need n >= 1 and p >= 2")
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")
        if self.c_const <= 0.0:
            raise ParameterError("c_const must be positive")
        theta = 3.0 * math.log(self.p) if self.theta is None else float(self.theta)
        if theta <= 1.0:
            raise ParameterError(f"theta must exceed 1, got {theta}")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> tuple[AssumptionCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def summary(self) -> str:
        return "; ".join(
            f"{c.name}: {'pass' if c.passed else 'FAIL'} (margin {c.margin:.4g})"
            for c in self.checks
        )


@dataclass(frozen=True)
class DirectionMatrices:
    """R and its elementwise square, both n x p with columns summing to zero (for R)."""

    r: np.ndarray
    r_sq: np.ndarray


@dataclass(frozen=True)
class WeightSet:
    """Computed penalty weights plus the diagnostics that produced them.

    kind is "uniform" (single beta) or "per-coordinate" (vector beta_k).
    theta records the tail parameter actually used; theta_reduced marks the
    forced-mode fallback that shrinks theta until the l1-estimate denominator
    is positive.
    """

    kind: str
    lambda_hat: float
    assumption_report: AssumptionReport
    theta: float
    kappa: float = 0.0
    c_const: float = 126.0
    beta: float | None = None
    beta_k: np.ndarray | None = None
    w_stat: float | None = None
    theta_reduced: bool = False
    forced: bool = False

    def penalties(self, p: int | None = None) -> np.ndarray:
        """Base per-coordinate weights as a length-p vector."""
        if self.kind == "uniform":
            if p is None:
                raise ParameterError("p is required to expand a uniform weight")
            return np.full(p, self.beta, dtype=np.float64)
        if p is not None and p != self.beta_k.shape[0]:
            raise ParameterError("p does not match the stored weight vector")
        return self.beta_k


def tail_correction(theta: float, n: int) -> float:
    """g(theta) = ln(1 / (1 - (1 - e^(-theta))^(1/n))), computed overflow-safe.

    For n = 1 this reduces to theta; it grows with n because all n noise
    factors must be controlled simultaneously.
    """
    if theta <= 0.0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if n < 1:
        raise ParameterError("n must be at least 1")
    x = math.exp(-theta)
    if x == 0.0:
        # exp underflowed; in this regime g(theta) = theta + ln n to machine accuracy
        return theta + math.log(n)
    inner = -math.expm1(math.log1p(-x) / n)
    if inner <= 0.0:
        return theta + math.log(n)
    return -math.log(inner)


def bernstein_radius(n: int, q: float, theta: float) -> float:
    """Deviation radius sqrt(2 n q (1-q) theta) + max(q, 1-q) theta / 3."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    if theta <= 0.0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    return math.sqrt(2.0 * n * q * (1.0 - q) * theta) + max(q, 1.0 - q) * theta / 3.0


def sigma_bound_simplified(p) -> float:
    """Simplified admissible noise level 1 / (2 ln 2 sqrt(2 ln p)).

    Any sigma below this satisfies the exact bound checked by assumption A3
    for every n < p and q_a <= 1. Accepts non-integer p for algebraic checks.
    """
    if p < 2:
        raise ParameterError("p must be at least 2")
    return 1.0 / (2.0 * math.log(2.0) * math.sqrt(2.0 * math.log(p)))


def _a3_bound(n: int, p: int, q_a: float) -> float:
    g3 = tail_correction(3.0 * math.log(p), n)
    return 1.0 / (_SQRT2 * math.log1p(q_a) * math.sqrt(g3))


def check_assumptions(params: WeightParams) -> AssumptionReport:
    """Evaluate A1-A3 and the c = 126 proviso; reports margins, never raises."""
    n, p, q = params.n, params.p, params.q
    log_p = math.log(p)
    checks = []

    a1_rhs = 12.0 * max(q, 1.0 - q) * log_p
    checks.append(
        AssumptionCheck(
            name="A1",
            passed=n * q >= a1_rhs,
            margin=n * q - a1_rhs,
            detail=f"n q = {n * q:.4g} vs 12 max(q, 1-q) ln p = {a1_rhs:.4g}",
        )
    )
    checks.append(
        AssumptionCheck(name="A2", passed=p >= 2, margin=float(p - 2), detail=f"p = {p}")
    )
    bound = _a3_bound(n, p, params.noise.q_a)
    checks.append(
        AssumptionCheck(
            name="A3",
            passed=params.noise.sigma < bound,
            margin=bound - params.noise.sigma,
            detail=f"sigma = {params.noise.sigma} vs admissible bound {bound:.4g}",
        )
    )
    if params.c_const == 126.0:
        checks.append(
            AssumptionCheck(
                name="c126",
                passed=n >= 20,
                margin=float(n - 20),
                detail=f"c = 126 requires n >= 20, n = {n}",
            )
        )
    else:
        checks.append(
            AssumptionCheck(
                name="c126",
                passed=True,
                margin=0.0,
                detail=f"non-default c = {params.c_const}; no n proviso checked",
            )
        )
    return AssumptionReport(checks=tuple(checks))


def _damping(params: WeightParams) -> float:
    """1 - kappa sqrt(2 g(theta)); positive iff the noise level is admissible."""
    kappa = params.noise.kappa
    damp = 1.0 - kappa * math.sqrt(2.0 * tail_correction(params.theta, params.n))
    if damp <= 0.0:
        raise AssumptionError(
            f"A3 violated: kappa sqrt(2 g(theta)) = {1.0 - damp:.4g} >= 1"
        )
    return damp


def l1_norm_estimate(y, params: WeightParams) -> float:
    """High-probability overestimate of ||x*||_1.

    (sum y + sqrt(sum y^2) kappa sqrt(2 theta) / (1 - kappa sqrt(2 g(theta))))
    / (n q - bernstein_radius(n, q, theta)). Raises AssumptionError naming A1
    when the denominator is not positive and A3 when the damping factor is not.
    """
    y = np.asarray(y, dtype=np.float64)
    n, q, theta = params.n, params.q, params.theta
    denom = n * q - bernstein_radius(n, q, theta)
    if denom <= 0.0:
        raise AssumptionError(
            f"A1 violated: n q - bernstein_radius = {denom:.4g} <= 0 at theta = {theta:.4g}"
        )
    damp = _damping(params)
    kappa = params.noise.kappa
    numer = float(y.sum()) + math.sqrt(float((y * y).sum())) * kappa * math.sqrt(2.0 * theta) / damp
    return numer / denom


def direction_matrices(pm: PoolingMatrix) -> DirectionMatrices:
    """R[l, k] = (n A[l, k] - sum_l' A[l', k]) / (n (n-1) q (1-q)), and R**2.

    Every column of R sums to zero; R maps the raw residual y - A x* to the
    surrogate-gradient coordinates.
    """
    n, q = pm.n, pm.q
    if n < 2:
        raise ParameterError("need n >= 2")
    col_sums = pm.a.sum(axis=0)
    r = (n * pm.a - col_sums) / (n * (n - 1) * q * (1.0 - q))
    return DirectionMatrices(r=r, r_sq=r * r)


def peak_pooled_energy(pm: PoolingMatrix, dm: DirectionMatrices) -> float:
    """W = max over (k, m) of (R_sq^T A)[k, m]; nonnegative."""
    if dm.r_sq.shape != pm.a.shape:
        raise ParameterError("direction matrices do not match the pooling matrix")
    return float((dm.r_sq.T @ pm.a).max())


def _second_term(params: WeightParams, lam: float) -> float:
    n, q, theta = params.n, params.q, params.theta
    m2 = max(q * q, (1.0 - q) ** 2)
    return params.c_const * (theta / n + m2 * theta * theta / (n * n * q * (1.0 - q))) * lam


def _reduced_theta(n: int, q: float, theta_full: float) -> float:
    """Largest theta <= theta_full keeping n q - bernstein_radius >= n q / 2.

    Closed form from the quadratic in sqrt(theta). Used only in forced mode
    when the full-theta denominator is nonpositive.
    """
    target = n * q / 2.0
    a = max(q, 1.0 - q) / 3.0
    b = math.sqrt(2.0 * n * q * (1.0 - q))
    root = (-b + math.sqrt(b * b + 4.0 * a * target)) / (2.0 * a)
    return min(theta_full, root * root)


def _effective_params(params: WeightParams, force: bool) -> tuple[WeightParams, bool]:
    denom = params.n * params.q - bernstein_radius(params.n, params.q, params.theta)
    if denom > 0.0:
        return params, False
    if not force:
        raise AssumptionError(
            f"A1 violated: l1-estimate denominator {denom:.4g} <= 0; "
            "pass force to shrink theta"
        )
    theta = _reduced_theta(params.n, params.q, params.theta)
    if theta <= 1.0:
        raise AssumptionError(
            f"cannot form weights: even reduced theta = {theta:.4g} <= 1 "
            f"at n = {params.n}, q = {params.q}"
        )
    return replace(params, theta=theta), True


def _prologue(params, force):
    report = check_assumptions(params)
    if not report.all_passed and not force:
        raise AssumptionError(
            f"assumptions failed ({', '.join(c.name for c in report.failed())}); "
            "pass force to proceed",
            report=report,
        )
    eff, reduced = _effective_params(params, force)
    return report, eff, reduced


def uniform_weight(
    pm: PoolingMatrix,
    y,
    params: WeightParams,
    force: bool = False,
    directions: DirectionMatrices | None = None,
) -> WeightSet:
    """Single weight beta = kappa L sqrt(2 theta W) + c(...) L for the plain estimator."""
    report, eff, reduced = _prologue(params, force)
    lam = l1_norm_estimate(y, eff)
    dm = direction_matrices(pm) if directions is None else directions
    w = peak_pooled_energy(pm, dm)
    kappa = params.noise.kappa
    beta = kappa * lam * math.sqrt(2.0 * eff.theta * w) + _second_term(eff, lam)
    return WeightSet(
        kind="uniform",
        beta=beta,
        lambda_hat=lam,
        w_stat=w,
        theta=eff.theta,
        kappa=kappa,
        c_const=params.c_const,
        theta_reduced=reduced,
        forced=force and not report.all_passed,
        assumption_report=report,
    )


def per_coordinate_weights(
    pm: PoolingMatrix,
    y,
    params: WeightParams,
    force: bool = False,
    directions: DirectionMatrices | None = None,
) -> WeightSet:
    """Vector of weights beta_k = sqrt(R_sq_k^T y^2) kappa sqrt(2 theta) / damp + c(...) L."""
    report, eff, reduced = _prologue(params, force)
    lam = l1_norm_estimate(y, eff)
    dm = direction_matrices(pm) if directions is None else directions
    y = np.asarray(y, dtype=np.float64)
    energy = np.maximum(dm.r_sq.T @ (y * y), 0.0)
    kappa = params.noise.kappa
    first = np.sqrt(energy) * (kappa * math.sqrt(2.0 * eff.theta) / _damping(eff))
    beta_k = first + _second_term(eff, lam)
    return WeightSet(
        kind="per-coordinate",
        beta_k=beta_k,
        lambda_hat=lam,
        theta=eff.theta,
        kappa=kappa,
        c_const=params.c_const,
        theta_reduced=reduced,
        forced=force and not report.all_passed,
        assumption_report=report,
    )


def gradient_at_truth(a_tilde, y_tilde, x_star) -> np.ndarray:
    """A~^T (y~ - A~ x*): the quantity valid weights must dominate coordinatewise.

    Needs the ground truth, so it is a validation tool, never a production input.
    """
    a_tilde = np.asarray(a_tilde, dtype=np.float64)
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    return a_tilde.T @ (y_tilde - a_tilde @ x_star)


def save_weights(ws: WeightSet, path, p: int | None = None) -> None:
    """One weight per line with a header comment carrying the diagnostics."""
    vec = ws.penalties(p)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# kind={ws.kind} theta={ws.theta!r} c={ws.c_const!r} kappa={ws.kappa!r}"
            f" theta_reduced={int(ws.theta_reduced)}\n"
        )
        fh.write(f"# lambda_hat={ws.lambda_hat!r} w={ws.w_stat!r}\n")
        fh.write(f"# assumptions: {ws.assumption_report.summary()}\n")
        for v in vec:
            fh.write(repr(float(v)) + "\n")
