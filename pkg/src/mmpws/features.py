"""Feature mappings Phi(Lambda, y) built from declarative component lists.

Every component is evaluated for every instance and every candidate class,
giving an ``(n, T, d)`` array. LF indices in components are 1-based, matching
the JSON feature-spec format ``{"kind": "error", "lf": 1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import ABSTAIN_KIND, LABEL_KIND, PROB_KIND, WeakDataset
from .errors import DatasetError, FeatureError

SINGLE_KINDS = ("error", "abstain", "brier", "log", "mv_disagreement")
PAIR_KINDS = ("pair_labels", "pair_prob_label", "pair_probs")
LABEL_DEPENDENT_KINDS = frozenset({"error", "brier", "log"})


@dataclass(frozen=True)
class FeatureComponent:
    kind: str
    lf: int
    other: int | None = None

    def __post_init__(self):
        if self.kind in SINGLE_KINDS:
            if self.other is not None:
                raise FeatureError(f"{self.kind} takes a single LF", "features")
        elif self.kind in PAIR_KINDS:
            if self.other is None or self.other == self.lf:
                raise FeatureError(f"{self.kind} needs two distinct LFs", "features")
        else:
            raise FeatureError(f"unknown feature kind {self.kind!r}", "features")

    @property
    def label_dependent(self) -> bool:
        return self.kind in LABEL_DEPENDENT_KINDS

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lf": self.lf}
        if self.other is not None:
            d["other"] = self.other
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureComponent":
        try:
            return cls(str(d["kind"]), int(d["lf"]), None if d.get("other") is None else int(d["other"]))
        except (KeyError, TypeError, ValueError):
            raise FeatureError(f"malformed feature component {d!r}", "features") from None

    def __str__(self):
        if self.other is None:
            return f"{self.kind}({self.lf})"
        return f"{self.kind}({self.lf},{self.other})"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Evaluated feature mapping.

    ``values[i, y - 1, s]`` is component ``s`` at instance ``i`` and class ``y``.
    ``mv`` carries the per-instance majority vote used by the feasibility repair.
    """

    components: tuple[FeatureComponent, ...]
    values: np.ndarray
    label_dependent: np.ndarray
    mv: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def at_labels(self, y: np.ndarray, indices: np.ndarray | None = None) -> np.ndarray:
        """Rows Phi(Lambda_i, y_i) for the given instances (all by default)."""
        idx = np.arange(self.n) if indices is None else np.asarray(indices)
        return self.values[idx, np.asarray(y) - 1, :]

    def true_expectation(self, y: np.ndarray) -> np.ndarray:
        """tau = mean_i Phi(Lambda_i, y_i) for a full labeling ``y`` (1-based)."""
        return self.at_labels(y).mean(axis=0)

    def subset(self, components: Sequence[int]) -> "FeatureMatrix":
        idx = list(components)
        return FeatureMatrix(
            tuple(self.components[s] for s in idx),
            self.values[:, :, idx],
            self.label_dependent[idx],
            self.mv,
        )


def _check_lf(dataset: WeakDataset, comp: FeatureComponent, j: int, forbid: int, what: str):
    if not 1 <= j <= dataset.m:
        raise FeatureError(f"{comp}: LF index {j} out of range 1..{dataset.m}", "features")
    if np.any(dataset.kinds[:, j - 1] == forbid):
        raise FeatureError(f"{comp}: LF {j} must {what}", "features")


def _evaluate(dataset: WeakDataset, comp: FeatureComponent, log_clip: float | None) -> np.ndarray:
    n, T = dataset.n, dataset.T
    classes = np.arange(1, T + 1)
    j = comp.lf
    k = comp.other
    kind = comp.kind
    if kind == "error":
        _check_lf(dataset, comp, j, PROB_KIND, "emit labels or abstain")
        return (dataset.labels[:, j - 1, None] != classes[None, :]).astype(float)
    if kind == "abstain":
        _check_lf(dataset, comp, j, -1, "exist")
        col = (dataset.kinds[:, j - 1] != ABSTAIN_KIND).astype(float)
        return np.repeat(col[:, None], T, axis=1)
    if kind in ("brier", "log"):
        _check_lf(dataset, comp, j, LABEL_KIND, "emit probabilities or abstain")
        p = dataset.probs[:, j - 1, :]
        present = (dataset.kinds[:, j - 1] == PROB_KIND)[:, None]
        if kind == "brier":
            return np.where(present, (1.0 - p) ** 2, 0.0)
        if log_clip is None:
            if np.any(present & (p <= 0.0)):
                raise FeatureError(f"{comp}: zero probability and log clipping disabled", "features")
            safe = np.where(present, p, 1.0)
        else:
            safe = np.where(present, np.maximum(p, log_clip), 1.0)
        return -np.log(safe)
    if kind == "mv_disagreement":
        _check_lf(dataset, comp, j, -1, "exist")
        col = (dataset.hard_votes[:, j - 1] != dataset.mv).astype(float)
        return np.repeat(col[:, None], T, axis=1)
    if kind == "pair_labels":
        _check_lf(dataset, comp, j, PROB_KIND, "emit labels or abstain")
        _check_lf(dataset, comp, k, PROB_KIND, "emit labels or abstain")
        col = (dataset.labels[:, j - 1] != dataset.labels[:, k - 1]).astype(float)
        return np.repeat(col[:, None], T, axis=1)
    if kind == "pair_prob_label":
        _check_lf(dataset, comp, j, PROB_KIND, "emit labels or abstain")
        _check_lf(dataset, comp, k, LABEL_KIND, "emit probabilities or abstain")
        lab = dataset.labels[:, j - 1]
        both = (lab > 0) & (dataset.kinds[:, k - 1] == PROB_KIND)
        picked = dataset.probs[np.arange(n), k - 1, np.maximum(lab, 1) - 1]
        col = np.where(both, 1.0 - picked, 0.0)
        return np.repeat(col[:, None], T, axis=1)
    if kind == "pair_probs":
        _check_lf(dataset, comp, j, LABEL_KIND, "emit probabilities or abstain")
        _check_lf(dataset, comp, k, LABEL_KIND, "emit probabilities or abstain")
        pj = dataset.kinds[:, j - 1] == PROB_KIND
        pk = dataset.kinds[:, k - 1] == PROB_KIND
        tv = 0.5 * np.abs(dataset.probs[:, j - 1, :] - dataset.probs[:, k - 1, :]).sum(axis=1)
        # abstain vs abstain agrees, abstain vs probabilities is maximal disagreement
        col = np.where(pj & pk, tv, np.where(pj == pk, 0.0, 1.0))
        return np.repeat(col[:, None], T, axis=1)
    raise FeatureError(f"unknown feature kind {kind!r}", "features")


def build_features(
    dataset: WeakDataset,
    spec: Sequence[FeatureComponent],
    log_clip: float | None = 1e-12,
) -> FeatureMatrix:
    """Evaluate every component of ``spec`` on every (instance, class) pair.

    Conventions for abstentions: an abstaining LF counts as wrong in ``error``,
    contributes 0 to ``brier``/``log`` and to ``pair_prob_label``, and two
    abstentions agree in ``pair_labels``/``pair_probs``.
    """
    spec = tuple(spec)
    if not spec:
        raise FeatureError("feature spec is empty", "features")
    values = np.stack([_evaluate(dataset, c, log_clip) for c in spec], axis=2)
    values.setflags(write=False)
    label_dependent = np.array([c.label_dependent for c in spec], dtype=bool)
    return FeatureMatrix(spec, values, label_dependent, dataset.mv.copy())


def default_spec(dataset: WeakDataset) -> list[FeatureComponent]:
    """Errors, abstentions and MV disagreements for label LFs; Brier scores and
    pairwise total-variation disagreements for probability LFs."""
    spec: list[FeatureComponent] = []
    prob_lfs = []
    for j in range(1, dataset.m + 1):
        kinds = dataset.kinds[:, j - 1]
        if np.any(kinds == PROB_KIND):
            prob_lfs.append(j)
            continue
        if not np.any(kinds == LABEL_KIND):
            continue
        spec.append(FeatureComponent("error", j))
        if np.any(kinds == ABSTAIN_KIND):
            spec.append(FeatureComponent("abstain", j))
        spec.append(FeatureComponent("mv_disagreement", j))
    for j in prob_lfs:
        spec.append(FeatureComponent("brier", j))
    for a, j in enumerate(prob_lfs):
        for k in prob_lfs[a + 1:]:
            spec.append(FeatureComponent("pair_probs", j, k))
    return spec


@dataclass(frozen=True)
class TriangleCheck:
    err_j: float
    err_k: float
    disagreement_jk: float
    holds: bool


def check_triangle(dataset: WeakDataset, j: int, k: int) -> TriangleCheck:
    """Verify |err_j - err_k| <= disagreement(j, k) on a fully labeled dataset.

    The comparison is done on integer counts so it is exact.
    """
    for lf in (j, k):
        if not 1 <= lf <= dataset.m:
            raise FeatureError(f"LF index {lf} out of range", "features")
        if np.any(dataset.kinds[:, lf - 1] == PROB_KIND):
            raise FeatureError(f"LF {lf} must emit hard labels", "features")
    if len(dataset.labeled) < dataset.n:
        raise DatasetError("check_triangle needs every instance labeled", "features")
    y = dataset.label_array()
    lj, lk = dataset.labels[:, j - 1], dataset.labels[:, k - 1]
    wrong_j = int(np.count_nonzero(lj != y))
    wrong_k = int(np.count_nonzero(lk != y))
    disagree = int(np.count_nonzero(lj != lk))
    n = dataset.n
    return TriangleCheck(wrong_j / n, wrong_k / n, disagree / n, abs(wrong_j - wrong_k) <= disagree)
