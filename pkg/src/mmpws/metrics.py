"""Evaluation metrics for probabilistic label predictions.

``h`` is always an ``(n, T)`` matrix of probabilities and ``labels`` a vector
of true classes numbered from 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DatasetError

CALIBRATION_CONFIG = {"estimator": "top_label_binned", "bins": 15, "scheme": "equal_mass", "norm": "l1"}


def _prob_of_truth(h: np.ndarray, labels: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != (h.shape[0],):
        raise DatasetError("need exactly one label per evaluated instance", "metrics")
    if np.any((labels < 1) | (labels > h.shape[1])):
        raise DatasetError("label out of range", "metrics")
    return h[np.arange(h.shape[0]), labels - 1]


def brier(h: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean((1.0 - _prob_of_truth(h, labels)) ** 2))


def logloss(h: np.ndarray, labels: np.ndarray, clip: float = 1e-12) -> float:
    return float(np.mean(-np.log(np.maximum(_prob_of_truth(h, labels), clip))))


def zero_one(h: np.ndarray, labels: np.ndarray) -> float:
    predicted = np.argmax(np.asarray(h), axis=1) + 1
    _prob_of_truth(h, labels)
    return float(np.mean(predicted != np.asarray(labels)))


def calibration_error(h: np.ndarray, labels: np.ndarray, bins: int = 15, scheme: str = "equal_mass") -> float:
    """Top-label binned calibration error with l1 aggregation.

    Equal-mass bins are cut at confidence quantiles; identical confidences
    always share a bin, so a constant predictor has a single effective bin.
    """
    h = np.asarray(h, dtype=float)
    _prob_of_truth(h, labels)
    n = h.shape[0]
    if n < bins:
        raise DatasetError(f"calibration error needs at least {bins} instances, got {n}", "metrics")
    conf = h.max(axis=1)
    correct = (np.argmax(h, axis=1) + 1 == np.asarray(labels)).astype(float)
    if scheme == "equal_mass":
        ordered = np.sort(conf)
        cuts = np.unique(ordered[[(k * n) // bins for k in range(1, bins)]])
    elif scheme == "equal_width":
        cuts = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    else:
        raise ValueError(f"unknown binning scheme {scheme!r}")
    which = np.searchsorted(cuts, conf, side="right")
    total = 0.0
    for b in np.unique(which):
        sel = which == b
        total += sel.sum() * abs(conf[sel].mean() - correct[sel].mean())
    return float(total / n)


@dataclass(frozen=True)
class EvalReport:
    brier: float
    logloss: float
    zero_one: float
    calibration_error: float
    n_evaluated: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(h: np.ndarray, labels: np.ndarray, bins: int = 15) -> EvalReport:
    h = np.asarray(h, dtype=float)
    return EvalReport(
        brier(h, labels),
        logloss(h, labels),
        zero_one(h, labels),
        calibration_error(h, labels, bins=min(bins, h.shape[0])),
        int(h.shape[0]),
    )


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    brier: float | None
    coverage: float


def abstention_sweep(h: np.ndarray, labels: np.ndarray, thresholds: Sequence[float]) -> list[SweepPoint]:
    """Brier score restricted to instances whose top probability reaches each threshold."""
    h = np.asarray(h, dtype=float)
    labels = np.asarray(labels)
    conf = h.max(axis=1)
    out = []
    for t in thresholds:
        if not 0 <= t <= 1:
            raise ValueError("thresholds must lie in [0, 1]")
        keep = conf >= t
        score = brier(h[keep], labels[keep]) if keep.any() else None
        out.append(SweepPoint(float(t), score, float(keep.mean())))
    return out
