"""Ground-truth viral loads and noisy pooled measurements.

Measurements follow the multiplicative lognormal model
y_j = (A x)_j * (1 + q_a)^(w_j) with w_j ~ N(0, sigma^2): the noise scales
with the pooled load. A first-order linearization
y_j = (A x)_j * (1 + ln(1 + q_a) w_j) is available for ablations; it is the
model the concentration analysis works in and may go slightly negative for
extreme noise draws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import RngStream
from .pooling import PoolingMatrix


@dataclass(frozen=True)
class SignalSpec:
    """Shape of the simulated load vector.

    A fraction f_s of the p entries are "significant" (infected) with loads
    drawn uniformly from hi_range; the rest carry background loads from
    lo_range. The ranges must be separable by a threshold.
    """

    p: int
    f_s: float
    hi_range: tuple[float, float] = (1.0, 1000.0)
    lo_range: tuple[float, float] = (0.0, 0.2)

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError("p must be at least 1")
        if not 0.0 < self.f_s < 1.0:
            raise ParameterError(f"f_s must lie in (0, 1), got {self.f_s}")
        lo, hi = self.lo_range, self.hi_range
        if not (lo[0] <= lo[1] and hi[0] <= hi[1]):
            raise ParameterError("ranges must be ordered (min, max)")
        if lo[0] < 0.0:
            raise ParameterError("loads are nonnegative")
        if hi[0] <= lo[1]:
            raise ParameterError("hi_range.min must exceed lo_range.max")

    @property
    def significant_count(self) -> int:
        # nearest integer, halves rounding up
        return int(math.floor(self.f_s * self.p + 0.5))


@dataclass(frozen=True)
class NoiseParams:
    """Noise level sigma and amplification factor q_a; kappa = sigma ln(1 + q_a)."""

    sigma: float
    q_a: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ParameterError("sigma must be nonnegative")
        if not 0.0 < self.q_a <= 1.0:
            raise ParameterError(f"q_a must lie in (0, 1], got {self.q_a}")
        if self.sigma >= 1.0:
            warnings.warn(
                f"sigma={self.sigma} is outside the low-variance regime (sigma < 1)",
                stacklevel=2,
            )

    @property
    def kappa(self) -> float:
        return self.sigma * math.log1p(self.q_a)


@dataclass(frozen=True)
class GroundTruth:
    x_star: np.ndarray
    support: np.ndarray  # sorted indices of the significant entries

    def __post_init__(self):
        x = np.asarray(self.x_star, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.intp))

    @property
    def s(self) -> int:
        return int(self.support.shape[0])


def generate_signal(spec: SignalSpec, stream: RngStream) -> GroundTruth:
    """Draw a load vector: s = round(f_s p) significant entries, rest background.

    Significant indices are chosen uniformly without replacement; their loads
    are Uniform(hi_range), all other loads Uniform(lo_range).
    """
    s = spec.significant_count
    support = np.sort(stream.choice_without_replacement(spec.p, s)) if s else np.empty(0, dtype=np.intp)
    x = stream.uniform(spec.lo_range[0], spec.lo_range[1], size=spec.p)
    if s:
        x[support] = stream.uniform(spec.hi_range[0], spec.hi_range[1], size=s)
    return GroundTruth(x_star=x, support=support)


def _pooled_loads(pm: PoolingMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != pm.p:
        raise ParameterError(f"x must have length p={pm.p}")
    if (x < 0.0).any():
        raise ParameterError("viral loads must be nonnegative")
    return pm.a @ x


def measure_exact(pm: PoolingMatrix, x, noise: NoiseParams, stream: RngStream) -> np.ndarray:
    """y_j = (A x)_j * (1 + q_a)^(w_j), w_j iid N(0, sigma^2)."""
    ax = _pooled_loads(pm, x)
    w = noise.sigma * stream.standard_normal(size=pm.n)
    return ax * np.power(1.0 + noise.q_a, w)


def measure_linearized(pm: PoolingMatrix, x, noise: NoiseParams, stream: RngStream) -> np.ndarray:
    """First-order model y_j = (A x)_j * (1 + ln(1 + q_a) w_j); may be negative."""
    ax = _pooled_loads(pm, x)
    w = noise.sigma * stream.standard_normal(size=pm.n)
    return ax * (1.0 + math.log1p(noise.q_a) * w)


def save_vector(v, path) -> None:
    """One value per line, shortest round-trip decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        for val in np.asarray(v, dtype=np.float64):
            fh.write(repr(float(val)) + "\n")


def load_vector(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return np.asarray([float(line) for line in fh if line.strip()], dtype=np.float64)
