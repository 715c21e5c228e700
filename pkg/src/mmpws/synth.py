"""Synthetic labeling functions with known accuracies, abstention rates and dependence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import WeakDataset
from .errors import WSError


@dataclass(frozen=True)
class SynthParams:
    n: int
    T: int
    accuracies: tuple[float, ...]
    abstain_rates: tuple[float, ...]
    # clone_of[j] = index of the LF that LF j copies (or -1); kappa[j] = copy probability
    clone_of: tuple[int, ...] = ()
    kappa: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        m = len(self.accuracies)
        if self.n < 1 or self.T < 2 or m < 1:
            raise WSError("need n >= 1, T >= 2 and at least one LF", "synth")
        if len(self.abstain_rates) != m:
            raise WSError("one abstain rate per LF required", "synth")
        if any(not 0 < a <= 1 for a in self.accuracies):
            raise WSError("accuracies must lie in (0, 1]", "synth")
        if any(not 0 <= r < 1 for r in self.abstain_rates):
            raise WSError("abstain rates must lie in [0, 1)", "synth")
        clone = tuple(self.clone_of) or (-1,) * m
        kappa = tuple(self.kappa) or (0.0,) * m
        if len(clone) != m or len(kappa) != m:
            raise WSError("clone_of and kappa need one entry per LF", "synth")
        for j, (b, k) in enumerate(zip(clone, kappa)):
            if not 0 <= k <= 1:
                raise WSError("kappa must lie in [0, 1]", "synth")
            if b >= j:
                raise WSError(f"LF {j + 1} can only clone an earlier LF", "synth")
        object.__setattr__(self, "clone_of", clone)
        object.__setattr__(self, "kappa", kappa)

    @property
    def m(self) -> int:
        return len(self.accuracies)

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "SynthParams":
        m = len(d["accuracies"])
        rates = d.get("abstain_rates", [0.0] * m)
        if isinstance(rates, (int, float)):
            rates = [float(rates)] * m
        clone = [-1] * m
        kappa = [0.0] * m
        for c in d.get("correlated", []):
            # LF numbers are 1-based in configs
            clone[c["lf"] - 1] = c["base"] - 1
            kappa[c["lf"] - 1] = float(c["kappa"])
        return cls(
            int(d["n"]),
            int(d.get("T", 2)),
            tuple(float(a) for a in d["accuracies"]),
            tuple(float(r) for r in rates),
            tuple(clone),
            tuple(kappa),
            int(d.get("seed", 0) if seed is None else seed),
        )


def generate(params: SynthParams) -> tuple[WeakDataset, np.ndarray]:
    """Draw (dataset, true labels). The returned dataset carries every label."""
    rng = np.random.default_rng(params.seed)
    n, T, m = params.n, params.T, params.m
    y = rng.integers(1, T + 1, size=n)
    votes = np.zeros((n, m), dtype=np.int64)
    for j in range(m):
        correct = rng.random(n) < params.accuracies[j]
        # a uniform wrong class: shift the truth by 1..T-1 modulo T
        shift = rng.integers(1, T, size=n)
        col = np.where(correct, y, (y - 1 + shift) % T + 1)
        col = np.where(rng.random(n) < params.abstain_rates[j], 0, col)
        base = params.clone_of[j]
        if base >= 0:
            copy = rng.random(n) < params.kappa[j]
            col = np.where(copy, votes[:, base], col)
        votes[:, j] = col
    labeled = {i: int(c) for i, c in enumerate(y)}
    return WeakDataset.from_label_matrix(votes, T, labeled), y


def synthesize(
    n: int,
    accuracies: Sequence[float],
    abstain_rates: Sequence[float] | None = None,
    T: int = 2,
    seed: int = 0,
) -> tuple[WeakDataset, np.ndarray]:
    rates = tuple(abstain_rates) if abstain_rates is not None else (0.0,) * len(accuracies)
    return generate(SynthParams(n, T, tuple(accuracies), rates, seed=seed))
