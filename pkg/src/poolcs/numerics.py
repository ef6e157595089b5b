"""Seeded randomness and the small dense linear-algebra kernel everything builds on.

All randomness flows through :class:`RngStream`, which addresses a generator by
(master_seed, path). Deriving a child stream never touches the parent's state,
so embarrassingly parallel work can hand each unit its own stream and still be
bit-reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ParameterError

_UINT64_MAX = 2**64 - 1


@dataclass
class RngStream:
    """Deterministic random stream addressed by (master_seed, path).

    Two streams constructed with the same address yield identical variate
    sequences. Streams with distinct paths are statistically independent;
    state is never shared between a stream and its children.
    """

    master_seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed <= _UINT64_MAX:
            raise ParameterError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "path", tuple(int(label) for label in self.path))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
            self._gen = np.random.default_rng(ss)
        return self._gen

    def child(self, *labels: int) -> "RngStream":
        """Derive an independent stream at path + labels."""
        return RngStream(self.master_seed, self.path + tuple(int(v) for v in labels))

    def bernoulli(self, q: float, size=None):
        """0/1 draws with success probability q; advances the stream."""
        if not 0.0 < q < 1.0:
            raise ParameterError(f"q must lie in the open interval (0, 1), got {q}")
        u = self.generator.random(size)
        if size is None:
            return int(u < q)
        return (u < q).astype(np.float64)

    def standard_normal(self, size=None):
        z = self.generator.standard_normal(size)
        return float(z) if size is None else z

    def uniform(self, low: float, high: float, size=None):
        u = self.generator.uniform(low, high, size)
        return float(u) if size is None else u

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self.generator.choice(n, size=k, replace=False)


def sample_bernoulli(stream: RngStream, q: float) -> int:
    """One Bernoulli(q) draw, 0 < q < 1."""
    return stream.bernoulli(q)


def sample_standard_normal(stream: RngStream) -> float:
    """One standard normal draw."""
    return stream.standard_normal()


def spectral_norm_sq(m, tol: float = 1e-10, max_iter: int = 20000) -> float:
    """Largest eigenvalue of M^T M via power iteration.

    Starts from the normalized all-ones vector (falling back to the heaviest
    canonical basis vector if that lands in the null space) and stops once the
    Rayleigh quotient is stable to relative tolerance `tol`.

    Raises ConvergenceError carrying the last estimate and iterate if the
    budget runs out.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ParameterError("matrix must be two-dimensional and nonempty")
    if not np.isfinite(m).all():
        raise ParameterError("matrix entries must be finite")
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    p = m.shape[1]
    v = np.full(p, 1.0 / math.sqrt(p))
    lam = 0.0
    lam_prev = None
    for _ in range(int(max_iter)):
        w = m.T @ (m @ v)
        lam = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            col_energy = (m * m).sum(axis=0)
            k = int(np.argmax(col_energy))
            if col_energy[k] == 0.0:
                return 0.0
            # all-ones start was in the null space; restart from e_k
            v = np.zeros(p)
            v[k] = 1.0
            lam_prev = None
            continue
        v = w / norm_w
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return lam
        lam_prev = lam
    raise ConvergenceError(
        f"power iteration did not stabilize within {max_iter} iterations",
        last_estimate=lam,
        last_vector=v,
    )
