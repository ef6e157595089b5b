"""Bernoulli pooling matrices and their recentered, rescaled surrogate system.

The raw 0/1 pooling matrix A does not satisfy a restricted eigenvalue
condition, so sparse recovery runs on the surrogate pair (A~, y~) whose
entries are recentered by q and rescaled by sqrt(n q (1-q)). Over fresh
draws of A the surrogate Gram matrix averages to the identity and the
surrogate gradient at the true signal averages to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import RngStream


@dataclass(frozen=True)
class PoolingMatrix:
    """Binary n x p pool-membership matrix with i.i.d. Bernoulli(q) entries.

    a[l, k] == 1 means sample k contributes to pool l. Matrices are used in
    the compressive regime n < p, but small square matrices are accepted for
    algebraic identity checks.
    """

    a: np.ndarray
    q: float

    def __post_init__(self):
        arr = np.asarray(self.a, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ParameterError("pooling matrix must be two-dimensional and nonempty")
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ParameterError("pooling matrix entries must be 0 or 1")
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True)
class SurrogateSystem:
    """Recentered/rescaled (A~, y~) pair ready for the penalized solvers."""

    a_tilde: np.ndarray
    y_tilde: np.ndarray
    source_q: float


@dataclass(frozen=True)
class RecParams:
    """Restricted eigenvalue parameters ||A~x|| >= kappa2 ||x||_2 - kappa1 ||x||_1."""

    kappa1: float
    kappa2: float
    c_rec: float


@dataclass(frozen=True)
class PoolingReport:
    """Diagnostics for a drawn matrix; degenerate draws are reported, never fixed."""

    empty_pools: tuple[int, ...]
    undercovered_samples: tuple[int, ...]

    @property
    def warning_count(self) -> int:
        return len(self.empty_pools) + len(self.undercovered_samples)

    def messages(self) -> list[str]:
        out = [f"pool {l} is empty (no contributing samples)" for l in self.empty_pools]
        out += [
            f"sample {k} participates in fewer than 2 pools"
            for k in self.undercovered_samples
        ]
        return out


def generate_pooling_matrix(n: int, p: int, q: float, stream: RngStream) -> PoolingMatrix:
    """Draw an n x p matrix with i.i.d. Bernoulli(q) entries.

    The matrix is returned exactly as sampled; degenerate draws (empty pools,
    samples in fewer than two pools) are kept so the distribution the theory
    assumes is not biased. Use validate_pooling to detect them.
    """
    if n < 2 or p < 2:
        raise ParameterError("need n >= 2 and p >= 2")
    if n >= p:
        raise ParameterError(f"compressive regime requires n < p, got n={n}, p={p}")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    return PoolingMatrix(a=stream.bernoulli(q, size=(n, p)), q=q)


def surrogate_matrix(pm: PoolingMatrix) -> np.ndarray:
    """A~[l, k] = (A[l, k] - q) / sqrt(n q (1 - q))."""
    scale = math.sqrt(pm.n * pm.q * (1.0 - pm.q))
    return (pm.a - pm.q) / scale


def surrogate_measurements(y, n: int, q: float) -> np.ndarray:
    """y~_j = (n y_j - sum_l y_l) / ((n - 1) sqrt(n q (1 - q)))."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != n:
        raise ParameterError("y must be a vector of length n")
    if n < 2:
        raise ParameterError("need n >= 2 (recentering divides by n - 1)")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    scale = (n - 1) * math.sqrt(n * q * (1.0 - q))
    return (n * y - y.sum()) / scale


def surrogate_system(pm: PoolingMatrix, y) -> SurrogateSystem:
    return SurrogateSystem(
        a_tilde=surrogate_matrix(pm),
        y_tilde=surrogate_measurements(y, pm.n, pm.q),
        source_q=pm.q,
    )


def rec_parameters(n: int, p: int, q: float, c_rec: float = 1.0) -> RecParams:
    """Restricted eigenvalue parameters for the surrogate matrix.

    kappa1 = c_rec * sqrt(ln p / n) / (q (1 - q)), kappa2 = 1/4. The universal
    constant in kappa1 is not pinned down by the theory, so it is exposed as
    c_rec; these values are diagnostics and never gate computation.
    """
    if p < 2 or n < 1:
        raise ParameterError("need p >= 2 and n >= 1")
    if c_rec <= 0.0:
        raise ParameterError("c_rec must be positive")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    kappa1 = c_rec * math.sqrt(math.log(p) / n) / (q * (1.0 - q))
    return RecParams(kappa1=kappa1, kappa2=0.25, c_rec=c_rec)


def validate_pooling(pm: PoolingMatrix) -> PoolingReport:
    """Report empty pools and samples covered by fewer than two pools."""
    row_sums = pm.a.sum(axis=1)
    col_sums = pm.a.sum(axis=0)
    return PoolingReport(
        empty_pools=tuple(int(i) for i in np.nonzero(row_sums == 0)[0]),
        undercovered_samples=tuple(int(k) for k in np.nonzero(col_sums < 2)[0]),
    )


def save_pooling_matrix(pm: PoolingMatrix, path) -> None:
    """Plain-text export: first line "n p q", then n lines of 0/1 digits."""
    lines = [f"{pm.n} {pm.p} {pm.q!r}"]
    for row in pm.a:
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pooling_matrix(path) -> PoolingMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParameterError(f"{path}: first line must be 'n p q'")
        n, p, q = int(header[0]), int(header[1]), float(header[2])
        rows = []
        for _ in range(n):
            rows.append([float(tok) for tok in fh.readline().split()])
    a = np.asarray(rows, dtype=np.float64)
    if a.shape != (n, p):
        raise ParameterError(f"{path}: expected {n}x{p} body, got {a.shape}")
    return PoolingMatrix(a=a, q=q)
