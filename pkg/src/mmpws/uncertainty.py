"""Expectation estimates (tau_hat, lambda) that define the uncertainty set.

The set contains every collection of per-instance label distributions whose
average feature expectation lies within ``lambda`` of ``tau_hat``,
componentwise.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .datamodel import WeakDataset
from .errors import EstimateError, FeatureError
from .features import FeatureMatrix

EXACT, SAMPLE_MEAN, PRIOR = "exact", "sample_mean", "prior"


@dataclass(frozen=True, eq=False)
class ExpectationEstimate:
    tau_hat: np.ndarray
    lam: np.ndarray
    provenance: tuple[str, ...]
    labeled_count: int = 0

    def __post_init__(self):
        tau = np.array(self.tau_hat, dtype=float)
        lam = np.array(self.lam, dtype=float)
        if tau.ndim != 1 or tau.shape != lam.shape or len(self.provenance) != tau.size:
            raise EstimateError("tau_hat, lambda and provenance must share dimension d", "uncertainty")
        if np.any(~np.isfinite(tau)) or np.any(~np.isfinite(lam)) or np.any(lam < 0):
            raise EstimateError("lambda must be finite and nonnegative", "uncertainty")
        tau.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "tau_hat", tau)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def d(self) -> int:
        return self.tau_hat.size

    def with_lambda(self, lam) -> "ExpectationEstimate":
        return replace(self, lam=np.asarray(lam, dtype=float))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.tau_hat, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.lam, dtype="<f8").tobytes())
        return h.hexdigest()

    def contains(self, p: np.ndarray, features: FeatureMatrix, slack: float = 1e-9) -> bool:
        """Whether the (n, T) distributions ``p`` satisfy every band constraint."""
        expectation = np.einsum("ny,nyd->d", p, features.values) / features.n
        return bool(np.all(np.abs(expectation - self.tau_hat) <= self.lam + slack))


@dataclass(frozen=True)
class LambdaPolicy:
    kind: str = "std_error"
    delta: float = 0.05
    bonferroni: bool = True

    def __post_init__(self):
        if self.kind not in ("std_error", "wilson"):
            raise EstimateError(f"unknown lambda policy {self.kind!r}", "uncertainty")
        if not 0 < self.delta < 1:
            raise EstimateError("delta must lie in (0, 1)", "uncertainty")

    @classmethod
    def from_dict(cls, d: Mapping) -> "LambdaPolicy":
        return cls(str(d.get("kind", "std_error")), float(d.get("delta", 0.05)), bool(d.get("bonferroni", True)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "bonferroni": self.bonferroni}


def exact_expectations(features: FeatureMatrix) -> np.ndarray:
    """Averages of the label-free components; NaN at label-dependent positions."""
    tau = np.full(features.d, np.nan)
    free = ~features.label_dependent
    # label-free components are constant across classes, so class 1 suffices
    tau[free] = features.values[:, 0, free].mean(axis=0)
    return tau


def _labeled_rows(features: FeatureMatrix, dataset: WeakDataset) -> np.ndarray:
    if not dataset.labeled:
        raise EstimateError("labeled subset is empty", "uncertainty")
    idx = np.array(sorted(dataset.labeled), dtype=np.int64)
    return features.at_labels(dataset.label_array(idx), idx)


def sample_mean_estimates(features: FeatureMatrix, dataset: WeakDataset) -> tuple[np.ndarray, np.ndarray]:
    """Sample means over the labeled subset and their standard errors.

    The standard error uses the population (uncorrected) variance. Label-free
    positions are NaN in both outputs.
    """
    rows = _labeled_rows(features, dataset)
    dep = features.label_dependent
    tau = np.full(features.d, np.nan)
    se = np.full(features.d, np.nan)
    tau[dep] = rows[:, dep].mean(axis=0)
    se[dep] = np.sqrt(rows[:, dep].var(axis=0) / rows.shape[0])
    return tau, se


def wilson_interval(p_hat: float, count: int, z: float) -> tuple[float, float]:
    z2 = z * z
    denom = 1.0 + z2 / count
    center = (p_hat + z2 / (2 * count)) / denom
    half = z / denom * np.sqrt(p_hat * (1 - p_hat) / count + z2 / (4 * count * count))
    return center - half, center + half


def wilson_lambda(
    features: FeatureMatrix,
    dataset: WeakDataset,
    delta: float = 0.05,
    bonferroni: bool = True,
    components: np.ndarray | None = None,
) -> np.ndarray:
    """Half-widths from Wilson score intervals for 0/1 label-dependent components.

    ``lambda`` is the larger distance from the sample proportion to either
    Wilson endpoint. With ``bonferroni`` the per-component level is
    ``delta / k`` where ``k`` is the number of components treated here.
    Positions not treated are NaN.
    """
    if not 0 < delta < 1:
        raise EstimateError("delta must lie in (0, 1)", "uncertainty")
    if components is None:
        components = np.flatnonzero(features.label_dependent)
    components = np.asarray(components, dtype=np.int64)
    for s in components:
        if features.components[s].kind != "error":
            raise FeatureError(f"{features.components[s]} is not an indicator component", "uncertainty")
    rows = _labeled_rows(features, dataset)
    count = rows.shape[0]
    level = delta / max(len(components), 1) if bonferroni else delta
    z = float(norm.ppf(1.0 - level / 2.0))
    lam = np.full(features.d, np.nan)
    for s in components:
        p_hat = float(rows[:, s].mean())
        lo, hi = wilson_interval(p_hat, count, z)
        lam[s] = max(p_hat - lo, hi - p_hat)
    return lam


def assemble(
    features: FeatureMatrix,
    dataset: WeakDataset,
    policy: LambdaPolicy | None = None,
    prior: Mapping[int, tuple[float, float]] | None = None,
) -> ExpectationEstimate:
    """Merge exact, sampled and prior components into one estimate.

    ``prior`` maps component positions to ``(tau_hat, lambda)`` pairs and takes
    precedence over sample means. Under the Wilson policy, label-dependent
    components that are not 0/1 indicators fall back to standard errors.
    """
    policy = policy or LambdaPolicy()
    prior = dict(prior or {})
    d = features.d
    tau = exact_expectations(features)
    lam = np.zeros(d)
    prov = [EXACT if not dep else "" for dep in features.label_dependent]

    for s, (t, l) in prior.items():
        if not 0 <= s < d:
            raise EstimateError(f"prior for component {s} out of range", "uncertainty")
        tau[s], lam[s], prov[s] = float(t), float(l), PRIOR

    sampled = np.array([s for s in range(d) if features.label_dependent[s] and prov[s] != PRIOR], dtype=np.int64)
    labeled_count = 0
    if sampled.size:
        if not dataset.labeled:
            names = ", ".join(str(features.components[s]) for s in sampled)
            raise EstimateError(f"no labels and no prior for label-dependent components: {names}", "uncertainty")
        labeled_count = len(dataset.labeled)
        mean, se = sample_mean_estimates(features, dataset)
        tau[sampled] = mean[sampled]
        lam[sampled] = se[sampled]
        if policy.kind == "wilson":
            indicators = np.array([s for s in sampled if features.components[s].kind == "error"], dtype=np.int64)
            if indicators.size:
                w = wilson_lambda(features, dataset, policy.delta, policy.bonferroni, indicators)
                lam[indicators] = w[indicators]
        for s in sampled:
            prov[s] = SAMPLE_MEAN
    return ExpectationEstimate(tau, lam, tuple(prov), labeled_count)


def mv_plugin_expectation(features: FeatureMatrix) -> np.ndarray:
    """tau_tilde: feature average when each instance is labeled by its majority vote."""
    return features.at_labels(features.mv).mean(axis=0)


def ensure_feasible(estimate: ExpectationEstimate, features: FeatureMatrix) -> ExpectationEstimate:
    """Enlarge lambda to max(lambda, |tau_hat - tau_tilde|) so the MV point masses are feasible."""
    gap = np.abs(estimate.tau_hat - mv_plugin_expectation(features))
    if np.all(estimate.lam >= gap):
        return estimate
    return estimate.with_lambda(np.maximum(estimate.lam, gap))
