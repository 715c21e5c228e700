"""Minimax probabilistic predictions (softmax over Phi @ mu*)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, EmptyGroupError, FingerprintError
from .features import FeatureComponent, FeatureMatrix
from .solver import SolverConfig, minimize_mmp_objective
from .uncertainty import ExpectationEstimate


def spec_fingerprint(components) -> str:
    payload = json.dumps([c.to_dict() for c in components], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class MMPModel:
    mu: np.ndarray
    minimax_risk: float
    spec_fingerprint: str
    estimate_fingerprint: str
    components: tuple[FeatureComponent, ...] = ()
    solver: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mu": [float(v) for v in self.mu],
            "minimax_risk": float(self.minimax_risk),
            "spec_fingerprint": self.spec_fingerprint,
            "estimate_fingerprint": self.estimate_fingerprint,
            "features": [c.to_dict() for c in self.components],
            "solver": self.solver,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MMPModel":
        return cls(
            np.asarray(doc["mu"], dtype=float),
            float(doc["minimax_risk"]),
            doc["spec_fingerprint"],
            doc["estimate_fingerprint"],
            tuple(FeatureComponent.from_dict(c) for c in doc.get("features", [])),
            dict(doc.get("solver", {})),
        )


def fit(features: FeatureMatrix, estimate: ExpectationEstimate, config: SolverConfig | None = None) -> MMPModel:
    """Fit mu* and the minimax risk; the estimate must describe a nonempty set."""
    config = config or SolverConfig()
    report = minimize_mmp_objective(features, estimate, config)
    meta = {
        "method": config.mmp_method,
        "iterations": report.iterations,
        "converged": report.converged,
        "initial_objective": report.objective_trace[0] if report.objective_trace else None,
        "final_objective": report.objective,
    }
    return MMPModel(
        report.mu.copy(),
        report.objective,
        spec_fingerprint(features.components),
        estimate.fingerprint(),
        features.components,
        meta,
    )


def predict(model: MMPModel, features: FeatureMatrix) -> np.ndarray:
    """(n, T) matrix h with h[i, y-1] proportional to exp(Phi[i, y] @ mu*)."""
    if spec_fingerprint(features.components) != model.spec_fingerprint:
        raise FingerprintError("model was fitted on a different feature spec", "mmp")
    scores = features.values @ model.mu
    scores -= scores.max(axis=1, keepdims=True)
    ex = np.exp(scores)
    return ex / ex.sum(axis=1, keepdims=True)


def group_prediction(h: np.ndarray, group, y: int) -> float:
    idx = np.fromiter((int(i) for i in group), dtype=np.int64)
    if idx.size == 0:
        raise EmptyGroupError("group is empty", "mmp")
    return float(h[idx, y - 1].mean())


@dataclass(frozen=True)
class RiskBound:
    empirical_logloss: float
    bound: float
    slack: float


def risk_bound_diag(
    model: MMPModel,
    features: FeatureMatrix,
    true_tau: np.ndarray,
    estimate: ExpectationEstimate,
    labels: np.ndarray,
) -> RiskBound:
    """Compare the realized log-loss with R + (|tau - tau_hat| - lambda) @ |mu*|.

    ``labels`` is the full vector of true classes (1-based).
    """
    labels = np.asarray(labels)
    if labels.shape != (features.n,):
        raise DatasetError("risk bound needs a label for every instance", "mmp")
    h = predict(model, features)
    logloss = float(-np.log(h[np.arange(features.n), labels - 1]).mean())
    correction = float((np.abs(np.asarray(true_tau) - estimate.tau_hat) - estimate.lam) @ np.abs(model.mu))
    bound = model.minimax_risk + correction
    return RiskBound(logloss, bound, bound - logloss)
