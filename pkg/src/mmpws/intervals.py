"""Confidence intervals for the proportion of a label within a group of instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import WeakDataset
from .errors import EmptyGroupError, WSError
from .features import FeatureMatrix
from .solver import SolveReport, SolverConfig, ci_dual_lower, ci_dual_upper
from .uncertainty import ExpectationEstimate


@dataclass(frozen=True)
class Group:
    id: str
    indices: frozenset[int]
    origin: dict = field(default_factory=lambda: {"kind": "explicit"}, compare=False, hash=False)

    def __post_init__(self):
        idx = frozenset(int(i) for i in self.indices)
        if not idx:
            raise EmptyGroupError(f"group {self.id!r} is empty", "intervals")
        if min(idx) < 0:
            raise WSError(f"group {self.id!r} has a negative index", "intervals")
        object.__setattr__(self, "indices", idx)

    def sorted_indices(self) -> list[int]:
        return sorted(self.indices)

    def __len__(self):
        return len(self.indices)


def explicit_group(indices, id: str | None = None) -> Group:
    indices = list(indices)
    return Group(id or f"explicit[{len(indices)}]", frozenset(indices), {"kind": "explicit"})


def groups_by_prediction(h: np.ndarray, p: float, y: int) -> Group:
    """Instances whose predicted probability for class ``y`` is at least ``p``."""
    if not 0 <= p <= 1:
        raise WSError("threshold p must lie in [0, 1]", "intervals")
    idx = np.flatnonzero(np.asarray(h)[:, y - 1] >= p)
    if idx.size == 0:
        raise EmptyGroupError(f"no instance has h(y={y}) >= {p}", "intervals")
    return Group(f"h{y}>={p:g}", frozenset(idx.tolist()), {"kind": "prediction_threshold", "p": p, "y": y})


def groups_by_vote(dataset: WeakDataset, r: float, y: int) -> Group:
    """Instances where at least a fraction ``r`` of all LFs output the label ``y``.

    Abstentions and probability outputs never count as a vote for ``y``.
    """
    if not 0 <= r <= 1:
        raise WSError("fraction r must lie in [0, 1]", "intervals")
    fraction = (dataset.labels == y).sum(axis=1) / dataset.m
    idx = np.flatnonzero(fraction >= r)
    if idx.size == 0:
        raise EmptyGroupError(f"no instance has vote fraction >= {r} for y={y}", "intervals")
    return Group(f"vote{y}>={r:g}", frozenset(idx.tolist()), {"kind": "vote_fraction", "r": r, "y": y})


@dataclass(frozen=True, eq=False)
class IntervalResult:
    group_id: str
    label: int
    lower: float
    upper: float
    mu_upper: np.ndarray
    mu_lower: np.ndarray
    solver_reports: tuple[SolveReport, SolveReport]

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, cushion: float = 0.0) -> bool:
        return self.lower - cushion <= value <= self.upper + cushion


def confidence_interval(
    features: FeatureMatrix,
    estimate: ExpectationEstimate,
    group: Group,
    y: int,
    config: SolverConfig | None = None,
) -> IntervalResult:
    """Solve both interval duals; endpoints are clamped into [0, 1]."""
    if max(group.indices) >= features.n:
        raise WSError(f"group {group.id!r} refers to instances beyond n={features.n}", "intervals")
    members = group.sorted_indices()
    up = ci_dual_upper(features, estimate, members, y, config)
    lo = ci_dual_lower(features, estimate, members, y, config)
    upper = float(np.clip(up.objective, 0.0, 1.0)) + 0.0
    lower = float(np.clip(lo.objective, 0.0, 1.0)) + 0.0
    return IntervalResult(group.id, y, lower, upper, up.mu, lo.mu, (up, lo))


@dataclass(frozen=True)
class Correction:
    eps_upper: float
    eps_lower: float
    corrected: tuple[float, float]


def theorem1_correction(result: IntervalResult, true_tau: np.ndarray, estimate: ExpectationEstimate) -> Correction:
    """Widen (or shrink) an interval by the misspecification of lambda.

    ``eps = (|tau - tau_hat| - lambda) @ |mu|`` for each endpoint's dual
    solution; both are nonpositive when lambda covers the estimation error.
    """
    excess = np.abs(np.asarray(true_tau) - estimate.tau_hat) - estimate.lam
    eps_upper = float(excess @ np.abs(result.mu_upper))
    eps_lower = float(excess @ np.abs(result.mu_lower))
    return Correction(eps_upper, eps_lower, (result.lower - eps_lower, result.upper + eps_upper))


@dataclass(frozen=True)
class SuboptimalityCheck:
    gap_upper: float
    gap_lower: float
    gap_upper_bound: float
    gap_lower_bound: float
    optimal: tuple[float, float]
    holds: bool


def theorem2_bound(
    features: FeatureMatrix,
    estimate: ExpectationEstimate,
    true_tau: np.ndarray,
    group: Group,
    y: int,
    config: SolverConfig | None = None,
) -> SuboptimalityCheck:
    """Bound the distance between the interval and the one from exact expectations.

    Each bound is ``max(||mu_opt||_1, ||mu||_1) * || |tau - tau_hat| + lambda ||_inf``
    where ``mu_opt`` solves the dual at ``tau_hat = tau``, ``lambda = 0``.
    """
    config = config or SolverConfig()
    true_tau = np.asarray(true_tau, dtype=float)
    exact = ExpectationEstimate(true_tau, np.zeros_like(true_tau), ("exact",) * true_tau.size)
    actual = confidence_interval(features, estimate, group, y, config)
    best = confidence_interval(features, exact, group, y, config)
    scale = float(np.max(np.abs(true_tau - estimate.tau_hat) + estimate.lam))
    bound_up = max(np.abs(best.mu_upper).sum(), np.abs(actual.mu_upper).sum()) * scale
    bound_lo = max(np.abs(best.mu_lower).sum(), np.abs(actual.mu_lower).sum()) * scale
    # compare unclamped optimal values: the bounds hold for the raw duals
    gap_up = abs(actual.solver_reports[0].objective - best.solver_reports[0].objective)
    gap_lo = abs(actual.solver_reports[1].objective - best.solver_reports[1].objective)
    cushion = 2 * config.tol
    holds = gap_up <= bound_up + cushion and gap_lo <= bound_lo + cushion
    return SuboptimalityCheck(gap_up, gap_lo, float(bound_up), float(bound_lo), (best.lower, best.upper), bool(holds))
