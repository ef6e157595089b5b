"""Recovery-quality metrics: RRMSE, threshold classification, sensitivity, specificity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError, ParameterError


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def rrmse(x_star, x_hat) -> float:
    """||x* - x^||_2 / ||x*||_2."""
    x_star = np.asarray(x_star, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_star.shape != x_hat.shape:
        raise ParameterError("vectors must have equal length")
    denom = float(np.linalg.norm(x_star))
    if denom == 0.0:
        raise MetricUndefinedError("rrmse is undefined for an all-zero ground truth")
    return float(np.linalg.norm(x_star - x_hat)) / denom


def classify(x, threshold: float) -> np.ndarray:
    """Positive iff the load strictly exceeds the threshold.

    The tie rule matters: background loads can sit exactly at the threshold,
    and those count as negative.
    """
    if threshold < 0.0:
        raise ParameterError("threshold must be nonnegative")
    return np.asarray(x, dtype=np.float64) > threshold


def confusion(truth_labels, pred_labels) -> Confusion:
    t = np.asarray(truth_labels, dtype=bool)
    p = np.asarray(pred_labels, dtype=bool)
    if t.shape != p.shape:
        raise ParameterError("label vectors must have equal length")
    return Confusion(
        tp=int((t & p).sum()),
        tn=int((~t & ~p).sum()),
        fp=int((~t & p).sum()),
        fn=int((t & ~p).sum()),
    )


def sensitivity(c: Confusion) -> float | None:
    """TP / (TP + FN); None when there are no positive samples."""
    denom = c.tp + c.fn
    return None if denom == 0 else c.tp / denom


def specificity(c: Confusion) -> float | None:
    """TN / (TN + FP); None when there are no negative samples."""
    denom = c.tn + c.fp
    return None if denom == 0 else c.tn / denom
