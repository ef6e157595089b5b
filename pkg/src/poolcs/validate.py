"""Monte-Carlo validation of the probabilistic claims behind the weights.

Each validator draws fresh randomness from a caller-supplied stream, counts
violations of a high-probability statement, and compares the empirical rate
against the theoretical one with 4-sigma binomial slack. Where the statement
is a theorem (the Bernoulli tail, the noise concentration lemma, the pooled
energy inequality), a failed report is a build-breaking bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, ParameterError
from .harness import (
    Cell,
    ExperimentConfig,
    build_weight_sets,
    config_cells,
    cross_validate_gamma,
    run_sweep,
    run_trial,
    simulate_trial,
)
from .numerics import RngStream
from .pooling import surrogate_matrix, surrogate_measurements
from .simulate import NoiseParams
from .weights import (
    WeightParams,
    WeightSet,
    bernstein_radius,
    gradient_at_truth,
    l1_norm_estimate,
    tail_correction,
)


@dataclass(frozen=True)
class TailReport:
    """Empirical tail rate vs a theoretical ceiling with Monte-Carlo slack."""

    trials: int
    violations: int
    empirical_rate: float | None
    theoretical_rate: float
    monte_carlo_4sigma: float

    @classmethod
    def from_counts(cls, trials: int, violations: int, theoretical_rate: float) -> "TailReport":
        empirical = violations / trials if trials > 0 else None
        r = theoretical_rate
        slack = 4.0 * math.sqrt(max(r * (1.0 - r), 0.0) / trials) if trials > 0 else 0.0
        return cls(
            trials=trials,
            violations=violations,
            empirical_rate=empirical,
            theoretical_rate=r,
            monte_carlo_4sigma=slack,
        )

    @property
    def passed(self) -> bool | None:
        if self.empirical_rate is None:
            return None
        return self.empirical_rate <= self.theoretical_rate + self.monte_carlo_4sigma

    def summary(self) -> str:
        if self.trials == 0:
            return "no trials: rate NA"
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: empirical {self.empirical_rate:.6g} vs "
            f"{self.theoretical_rate:.6g} + {self.monte_carlo_4sigma:.2g} "
            f"({self.violations}/{self.trials})"
        )


@dataclass(frozen=True)
class WeightDominanceReport:
    """How often any coordinate of the gradient at truth escaped the weights."""

    uniform: TailReport
    per_coordinate: TailReport
    coordinate_violations: int  # total violating (trial, k) pairs for the vector weights
    skipped: int


@dataclass(frozen=True)
class L1CoverageReport:
    trials: int
    valid: int
    invalid: int
    ratio_min: float | None
    ratio_max: float | None
    ratio_mean: float | None
    frac_under: float | None   # estimate below the true l1 norm
    frac_over2: float | None   # estimate above twice the true l1 norm
    mean_l1: float | None
    std_l1: float | None
    mean_estimate: float | None
    std_estimate: float | None


@dataclass(frozen=True)
class GaussianConcentrationReport:
    one_sided: TailReport   # ceiling 2 e^-theta
    two_sided: TailReport   # ceiling 3 e^-theta
    degenerate: bool        # sigma == 0: both sides of the event are zero


@dataclass(frozen=True)
class EnergyInequalityReport:
    trials: int
    violations: int
    max_excess: float  # largest relative LHS/RHS overshoot observed


@dataclass(frozen=True)
class ErrorBoundInputs:
    """Inputs for the recovery error bound arithmetic.

    gamma must exceed 2 here (the bound is meaningless otherwise) and
    0 < epsilon < kappa2. The universal constant is unknown; bounds are
    reported up to c_universal.
    """

    gamma: float
    epsilon: float
    kappa1: float
    kappa2: float
    weights: WeightSet
    support: np.ndarray
    p: int
    c_universal: float = 1.0

    def __post_init__(self):
        if self.gamma <= 2.0:
            raise ParameterError(f"gamma must exceed 2, got {self.gamma}")
        if not 0.0 < self.epsilon < self.kappa2:
            raise ParameterError(
                f"epsilon must lie in (0, kappa2 = {self.kappa2}), got {self.epsilon}"
            )
        if self.kappa1 <= 0.0:
            raise ParameterError("kappa1 must be positive")
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.intp))


@dataclass(frozen=True)
class ErrorBound:
    value: float
    gating_satisfied: bool
    rho_gamma: float
    beta_support_norm: float


@dataclass(frozen=True)
class TrendSeriesCheck:
    estimator: str
    q: float
    label: str
    values: tuple[float, ...]
    monotone: bool


@dataclass(frozen=True)
class TrendReport:
    rows: list  # (estimator, q, sigma, f_s, n, gamma, mean_rrmse)
    n_series: list[TrendSeriesCheck]
    fs_series: list[TrendSeriesCheck]

    @property
    def decreasing_in_n(self) -> bool:
        return all(c.monotone for c in self.n_series)

    @property
    def increasing_in_fs(self) -> bool:
        return all(c.monotone for c in self.fs_series)


@dataclass(frozen=True)
class ScaleReport:
    scales: tuple[float, ...]
    rrmse: dict[str, np.ndarray]  # estimator -> trials x scales
    max_spread: float             # worst |rrmse(scale) - rrmse(1)| over everything


def rho_gamma(gamma: float) -> float:
    """gamma (gamma + 2) / (gamma - 2); requires gamma > 2."""
    if gamma <= 2.0:
        raise ParameterError(f"gamma must exceed 2, got {gamma}")
    return gamma * (gamma + 2.0) / (gamma - 2.0)


def recovery_error_bound(inputs: ErrorBoundInputs) -> ErrorBound:
    """Error bound (c rho / eps^2) ||beta_S||_2 and its gating condition.

    For uniform weights ||beta_S||_2 = beta sqrt(s) and the gating condition
    reduces to sqrt(s) <= (kappa2 - eps) / (kappa1 rho). The bound value is
    reported up to the unknown universal constant c_universal.
    """
    rho = rho_gamma(inputs.gamma)
    pen = inputs.weights.penalties(inputs.p)
    beta_s = float(np.linalg.norm(pen[inputs.support]))
    beta_min = float(pen.min())
    gate_rhs = beta_min * (inputs.kappa2 - inputs.epsilon) / (inputs.kappa1 * rho)
    value = inputs.c_universal * rho / (inputs.epsilon**2) * beta_s
    return ErrorBound(
        value=value,
        gating_satisfied=beta_s <= gate_rhs,
        rho_gamma=rho,
        beta_support_norm=beta_s,
    )


def validate_weight_dominance(
    n: int,
    p: int,
    q: float,
    f_s: float,
    noise: NoiseParams,
    trials: int,
    stream: RngStream,
    force: bool = False,
    noise_model: str = "exact",
) -> WeightDominanceReport:
    """Rate at which |gradient at truth| escapes the weights, both kinds.

    The theory promises success with probability at least 1 - c'/p for an
    unknown c'; the report uses 1/p as the nominal ceiling, and in practice
    the finite-sample slack makes violations essentially impossible.
    """
    config = ExperimentConfig(
        p=p,
        n_list=(n,),
        f_s_list=(f_s,),
        q_list=(q,),
        sigma=noise.sigma,
        q_a=noise.q_a,
        noise_model=noise_model,
        seed=stream.master_seed,
        force_assumptions=force,
        trials=max(trials, 0),
    )
    cell = Cell(n=n, f_s=f_s, q=q, sigma=noise.sigma)
    uniform_violations = 0
    coord_any = 0
    coord_pairs = 0
    skipped = 0
    done = 0
    for t in range(trials):
        sim = simulate_trial(config, cell, stream.child(101, t))
        try:
            weight_sets = build_weight_sets(config, cell, sim)
        except AssumptionError:
            skipped += 1
            continue
        done += 1
        a_tilde = surrogate_matrix(sim.pm)
        y_tilde = surrogate_measurements(sim.y, sim.pm.n, sim.pm.q)
        g = np.abs(gradient_at_truth(a_tilde, y_tilde, sim.truth.x_star))
        if g.max() > weight_sets["lasso"].beta:
            uniform_violations += 1
        exceeding = g > weight_sets["wlasso"].beta_k
        coord_pairs += int(exceeding.sum())
        if exceeding.any():
            coord_any += 1
    ceiling = 1.0 / p
    return WeightDominanceReport(
        uniform=TailReport.from_counts(done, uniform_violations, ceiling),
        per_coordinate=TailReport.from_counts(done, coord_any, ceiling),
        coordinate_violations=coord_pairs,
        skipped=skipped,
    )


def validate_l1_estimate(
    n: int,
    p: int,
    q: float,
    f_s: float,
    noise: NoiseParams,
    trials: int,
    stream: RngStream,
    noise_model: str = "exact",
) -> L1CoverageReport:
    """Coverage of the l1-norm overestimate against the true norm.

    Trials where the estimate is undefined (nonpositive denominator) are
    flagged invalid, excluded from the statistics, and counted.
    """
    config = ExperimentConfig(
        p=p,
        n_list=(n,),
        f_s_list=(f_s,),
        q_list=(q,),
        sigma=noise.sigma,
        q_a=noise.q_a,
        noise_model=noise_model,
        seed=stream.master_seed,
        estimators=(),
        force_assumptions=True,
    )
    cell = Cell(n=n, f_s=f_s, q=q, sigma=noise.sigma)
    params = WeightParams(n=n, p=p, q=q, noise=noise)
    ratios, l1s, lams = [], [], []
    invalid = 0
    for t in range(trials):
        sim = simulate_trial(config, cell, stream.child(102, t))
        try:
            lam = l1_norm_estimate(sim.y, params)
        except AssumptionError:
            invalid += 1
            continue
        l1 = float(np.abs(sim.truth.x_star).sum())
        ratios.append(lam / l1)
        l1s.append(l1)
        lams.append(lam)
    if not ratios:
        return L1CoverageReport(
            trials=trials, valid=0, invalid=invalid,
            ratio_min=None, ratio_max=None, ratio_mean=None,
            frac_under=None, frac_over2=None,
            mean_l1=None, std_l1=None, mean_estimate=None, std_estimate=None,
        )
    arr = np.asarray(ratios)
    return L1CoverageReport(
        trials=trials,
        valid=len(ratios),
        invalid=invalid,
        ratio_min=float(arr.min()),
        ratio_max=float(arr.max()),
        ratio_mean=float(arr.mean()),
        frac_under=float((arr < 1.0).mean()),
        frac_over2=float((arr > 2.0).mean()),
        mean_l1=float(np.mean(l1s)),
        std_l1=float(np.std(l1s, ddof=1)) if len(l1s) > 1 else None,
        mean_estimate=float(np.mean(lams)),
        std_estimate=float(np.std(lams, ddof=1)) if len(lams) > 1 else None,
    )


def validate_bernstein(
    n: int, q: float, theta: float, trials: int, stream: RngStream, chunk: int = 100_000
) -> TailReport:
    """Empirical P(S_n <= n q - bernstein_radius) vs e^-theta for Bernoulli sums."""
    if theta <= 0.0:
        raise ParameterError("theta must be positive")
    threshold = n * q - bernstein_radius(n, q, theta)
    violations = 0
    remaining = trials
    while remaining > 0:
        c = min(chunk, remaining)
        remaining -= c
        draws = stream.generator.random((c, n)) < q
        sums = draws.sum(axis=1)
        violations += int((sums <= threshold).sum())
    return TailReport.from_counts(trials, violations, math.exp(-theta))


def validate_gaussian_concentration(
    n: int,
    q: float,
    sigma: float,
    q_a: float,
    theta: float,
    trials: int,
    stream: RngStream,
    p_columns: int = 32,
    chunk: int = 4000,
) -> GaussianConcentrationReport:
    """Tail of r^T(y - A x*) against the computable radius, r a direction column.

    Works in the linearized noise model, where r^T y is exactly Gaussian given
    A. Each trial draws a fresh matrix and signal, takes the first column of
    the direction matrix as r, and tests
        r^T (y - A x*) >= sqrt(r_sq^T y^2) kappa sqrt(2 theta) / (1 - kappa sqrt(2 g))
    one-sided (ceiling 2 e^-theta) and two-sided (ceiling 3 e^-theta). With
    sigma = 0 both sides are exactly zero, the event holds trivially, and the
    report is flagged degenerate.
    """
    noise = NoiseParams(sigma=sigma, q_a=q_a)
    kappa = noise.kappa
    g = tail_correction(theta, n)
    damp = 1.0 - kappa * math.sqrt(2.0 * g)
    if damp <= 0.0:
        raise AssumptionError(f"kappa sqrt(2 g(theta)) = {1.0 - damp:.4g} >= 1")
    factor = kappa * math.sqrt(2.0 * theta) / damp
    ln1q = math.log1p(q_a)
    one_sided = 0
    two_sided = 0
    remaining = trials
    gen = stream.generator
    while remaining > 0:
        c = min(chunk, remaining)
        remaining -= c
        a = (gen.random((c, n, p_columns)) < q).astype(np.float64)
        x = gen.uniform(0.0, 0.2, size=(c, p_columns))
        hot = gen.integers(0, p_columns, size=(c, 2))
        rows = np.arange(c)
        for j in range(2):
            x[rows, hot[:, j]] = gen.uniform(1.0, 1000.0, size=c)
        ax = np.einsum("cnp,cp->cn", a, x)
        w = sigma * gen.standard_normal((c, n))
        y = ax * (1.0 + ln1q * w)
        col_sums = a.sum(axis=1)
        r = (n * a[:, :, 0] - col_sums[:, 0][:, None]) / (n * (n - 1) * q * (1.0 - q))
        lhs = np.einsum("cn,cn->c", r, y - ax)
        radius = np.sqrt(np.einsum("cn,cn->c", r * r, y * y)) * factor
        one_sided += int((lhs >= radius).sum())
        two_sided += int((np.abs(lhs) >= radius).sum())
    return GaussianConcentrationReport(
        one_sided=TailReport.from_counts(trials, one_sided, 2.0 * math.exp(-theta)),
        two_sided=TailReport.from_counts(trials, two_sided, 3.0 * math.exp(-theta)),
        degenerate=(sigma == 0.0),
    )


def validate_energy_inequality(
    trials: int, stream: RngStream, max_rows: int = 12, max_cols: int = 12, rel_tol: float = 1e-12
) -> EnergyInequalityReport:
    """sum_l s_l (sum_m a_lm x_m)^2 <= max_m (sum_l s_l a_lm) ||x||_1^2, exactly.

    A theorem for any nonnegative s, real x and binary a; violations beyond
    float rounding indicate a bug.
    """
    gen = stream.generator
    violations = 0
    max_excess = 0.0
    for _ in range(trials):
        n = int(gen.integers(1, max_rows + 1))
        p = int(gen.integers(1, max_cols + 1))
        s = np.abs(gen.standard_normal(n))
        x = gen.standard_normal(p) * 10.0
        a = (gen.random((n, p)) < 0.5).astype(np.float64)
        lhs = float((s * (a @ x) ** 2).sum())
        rhs = float((s @ a).max() * np.abs(x).sum() ** 2)
        if lhs > rhs * (1.0 + rel_tol) + 1e-12:
            violations += 1
        if rhs > 0.0:
            max_excess = max(max_excess, lhs / rhs - 1.0)
    return EnergyInequalityReport(trials=trials, violations=violations, max_excess=max_excess)


def validate_trends(config: ExperimentConfig, jobs: int = 1) -> TrendReport:
    """Mean RRMSE over the config grid, with monotonicity verdicts.

    Checks that the mean RRMSE decreases as n grows (at each f_s, q) and
    increases with f_s (at each n, q), for every estimator.
    """
    from .harness import run_sweep

    sweep = run_sweep(config, jobs=jobs)
    rows = []
    means: dict[tuple, float] = {}
    for agg in sweep.aggregates:
        rows.append(
            (agg.estimator, agg.q, agg.sigma, agg.f_s, agg.n, agg.gamma, agg.rrmse_mean)
        )
        means[(agg.estimator, agg.q, agg.sigma, agg.f_s, agg.n)] = agg.rrmse_mean
    sigmas = config.sigma_list if config.sigma_list else (config.sigma,)
    n_checks, fs_checks = [], []
    for est in config.estimators:
        for sig in sigmas:
            for q in config.q_list:
                for f_s in config.f_s_list:
                    series = [means.get((est, q, sig, f_s, n)) for n in config.n_list]
                    if any(v is None for v in series):
                        continue
                    n_checks.append(
                        TrendSeriesCheck(
                            estimator=est,
                            q=q,
                            label=f"f_s={f_s}",
                            values=tuple(series),
                            monotone=all(a > b for a, b in zip(series, series[1:])),
                        )
                    )
                for n in config.n_list:
                    series = [means.get((est, q, sig, f_s, n)) for f_s in config.f_s_list]
                    if any(v is None for v in series):
                        continue
                    fs_checks.append(
                        TrendSeriesCheck(
                            estimator=est,
                            q=q,
                            label=f"n={n}",
                            values=tuple(series),
                            monotone=all(a < b for a, b in zip(series, series[1:])),
                        )
                    )
    return TrendReport(rows=rows, n_series=n_checks, fs_series=fs_checks)


def validate_scale_invariance(
    config: ExperimentConfig,
    scales: tuple[float, ...] = (1.0, 4.0, 16.0),
    trials: int | None = None,
) -> ScaleReport:
    """RRMSE under signal rescaling with paired noise streams.

    gamma is cross-validated once at the base scale and reused, so every run
    differs only by the scale factor; the whole pipeline is scale-equivariant
    and the RRMSE values should agree to solver precision.
    """
    cells = config_cells(config)
    if len(cells) != 1:
        raise ParameterError("scale invariance runs on a single-cell config")
    cell = cells[0]
    trials = config.trials if trials is None else trials
    gamma = cross_validate_gamma(config, cell).gamma
    out = {est: np.zeros((trials, len(scales))) for est in config.estimators}
    for t in range(trials):
        for si, scale in enumerate(scales):
            recs = run_trial(config, cell, t, gamma, scale=scale)
            if isinstance(recs, list):
                for rec in recs:
                    out[rec.estimator][t, si] = rec.rrmse
    spread = 0.0
    for est in config.estimators:
        base = out[est][:, 0:1]
        spread = max(spread, float(np.abs(out[est] - base).max()))
    return ScaleReport(scales=tuple(scales), rrmse=out, max_spread=spread)
