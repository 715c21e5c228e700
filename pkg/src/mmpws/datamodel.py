"""Labeling-function outputs, weakly supervised datasets and the majority-vote baseline.

Classes are numbered ``1..T`` everywhere (file formats, ``Label``, predicted
labels); instance and LF positions in arrays are 0-based, as in numpy.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DatasetError

ABSTAIN_KIND, LABEL_KIND, PROB_KIND = 0, 1, 2
_PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class Label:
    cls: int


@dataclass(frozen=True)
class Abstain:
    pass


@dataclass(frozen=True)
class Probabilities:
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DatasetError(f"invalid probability vector {self.probs}", "datamodel")

    def argmax(self) -> int:
        """Most probable class (1-based, lowest index on ties)."""
        return int(np.argmax(self.probs)) + 1


ABSTAIN = Abstain()
LFOutput = Union[Label, Abstain, Probabilities]


@dataclass(frozen=True, eq=False)
class WeakDataset:
    """Grid of LF outputs stored column-wise as arrays.

    ``kinds[i, j]`` is one of ``ABSTAIN_KIND``, ``LABEL_KIND``, ``PROB_KIND``;
    ``labels[i, j]`` holds the class (1..T) where the kind is a label and 0
    elsewhere; ``probs[i, j]`` holds the probability vector where the kind is
    probabilities and zeros elsewhere. ``labeled`` maps instance -> true class.
    """

    T: int
    kinds: np.ndarray
    labels: np.ndarray
    probs: np.ndarray
    labeled: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 2:
            raise DatasetError("T must be at least 2", "datamodel")
        kinds = np.array(self.kinds, dtype=np.int8)
        labels = np.asarray(self.labels, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if kinds.ndim != 2 or kinds.shape[0] == 0:
            raise DatasetError("empty dataset", "datamodel")
        if kinds.shape[1] == 0:
            raise DatasetError("dataset has no labeling functions", "datamodel")
        n, m = kinds.shape
        if labels.shape != (n, m) or probs.shape != (n, m, self.T):
            raise DatasetError("inconsistent array shapes", "datamodel")
        is_label = kinds == LABEL_KIND
        if np.any(is_label & ((labels < 1) | (labels > self.T))):
            raise DatasetError("label out of range", "datamodel")
        is_prob = kinds == PROB_KIND
        if is_prob.any():
            p = probs[is_prob]
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
                raise DatasetError("probability vectors must be nonnegative and sum to 1", "datamodel")
        labeled = {int(k): int(v) for k, v in dict(self.labeled).items()}
        for i, y in labeled.items():
            if not 0 <= i < n:
                raise DatasetError(f"labeled instance {i} out of range", "datamodel")
            if not 1 <= y <= self.T:
                raise DatasetError("label out of range", "datamodel")
        kinds.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "labels", np.where(is_label, labels, 0))
        object.__setattr__(self, "probs", np.where(is_prob[..., None], probs, 0.0))
        self.labels.setflags(write=False)
        self.probs.setflags(write=False)
        object.__setattr__(self, "labeled", labeled)

    @classmethod
    def from_outputs(
        cls,
        outputs: Sequence[Sequence[LFOutput]],
        T: int,
        labeled: Mapping[int, int] | None = None,
    ) -> "WeakDataset":
        n = len(outputs)
        if n == 0:
            raise DatasetError("empty dataset", "datamodel")
        m = len(outputs[0])
        kinds = np.zeros((n, m), dtype=np.int8)
        labels = np.zeros((n, m), dtype=np.int64)
        probs = np.zeros((n, m, T))
        for i, row in enumerate(outputs):
            if len(row) != m:
                raise DatasetError(f"row {i} has {len(row)} entries, expected {m}", "datamodel")
            for j, out in enumerate(row):
                if isinstance(out, Label):
                    kinds[i, j] = LABEL_KIND
                    labels[i, j] = out.cls
                elif isinstance(out, Probabilities):
                    if len(out.probs) != T:
                        raise DatasetError(
                            f"probability vector of length {len(out.probs)}, expected {T}", "datamodel"
                        )
                    kinds[i, j] = PROB_KIND
                    probs[i, j] = out.probs
                elif not isinstance(out, Abstain):
                    raise DatasetError(f"unknown LF output {out!r}", "datamodel")
        return cls(T=T, kinds=kinds, labels=labels, probs=probs, labeled=dict(labeled or {}))

    @classmethod
    def from_label_matrix(
        cls, labels: np.ndarray, T: int, labeled: Mapping[int, int] | None = None
    ) -> "WeakDataset":
        """Hard-label dataset from an integer matrix where 0 means abstain."""
        labels = np.asarray(labels, dtype=np.int64)
        kinds = np.where(labels > 0, LABEL_KIND, ABSTAIN_KIND).astype(np.int8)
        probs = np.zeros(labels.shape + (T,))
        return cls(T=T, kinds=kinds, labels=labels, probs=probs, labeled=dict(labeled or {}))

    @property
    def n(self) -> int:
        return self.kinds.shape[0]

    @property
    def m(self) -> int:
        return self.kinds.shape[1]

    def output(self, i: int, j: int) -> LFOutput:
        kind = self.kinds[i, j]
        if kind == LABEL_KIND:
            return Label(int(self.labels[i, j]))
        if kind == PROB_KIND:
            return Probabilities(tuple(float(v) for v in self.probs[i, j]))
        return ABSTAIN

    def row(self, i: int) -> list[LFOutput]:
        return [self.output(i, j) for j in range(self.m)]

    @property
    def outputs(self) -> list[list[LFOutput]]:
        return [self.row(i) for i in range(self.n)]

    def with_labeled(self, labeled: Mapping[int, int]) -> "WeakDataset":
        return WeakDataset(self.T, self.kinds, self.labels, self.probs, dict(labeled))

    @cached_property
    def hard_votes(self) -> np.ndarray:
        """(n, m) class each LF votes for (probabilities via argmax), 0 when abstaining."""
        votes = self.labels.copy()
        is_prob = self.kinds == PROB_KIND
        votes[is_prob] = np.argmax(self.probs[is_prob], axis=1) + 1
        return votes

    @cached_property
    def vote_counts(self) -> np.ndarray:
        """(n, T) number of LFs voting for each class."""
        counts = np.zeros((self.n, self.T + 1), dtype=np.int64)
        rows = np.repeat(np.arange(self.n), self.m)
        np.add.at(counts, (rows, self.hard_votes.ravel()), 1)
        return counts[:, 1:]

    @cached_property
    def mv(self) -> np.ndarray:
        """(n,) majority vote per instance, 1-based; all-abstain rows vote class 1."""
        return np.argmax(self.vote_counts, axis=1) + 1

    def mv_probabilities(self) -> np.ndarray:
        """(n, T) vote shares; uniform on all-abstain rows."""
        counts = self.vote_counts.astype(float)
        total = counts.sum(axis=1, keepdims=True)
        uniform = np.full_like(counts, 1.0 / self.T)
        return np.divide(counts, total, out=uniform, where=total > 0)

    def label_array(self, indices: Iterable[int] | None = None) -> np.ndarray:
        """True classes of ``indices`` (default: every instance); raises if any is unlabeled."""
        idx = range(self.n) if indices is None else indices
        try:
            return np.array([self.labeled[int(i)] for i in idx], dtype=np.int64)
        except KeyError as exc:
            raise DatasetError(f"instance {exc.args[0]} has no label", "datamodel") from None

    def __eq__(self, other):
        if not isinstance(other, WeakDataset):
            return NotImplemented
        return (
            self.T == other.T
            and np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.probs, other.probs)
            and self.labeled == other.labeled
        )

    __hash__ = None


def _row_counts(row: Sequence[LFOutput], T: int) -> np.ndarray:
    counts = np.zeros(T, dtype=np.int64)
    for out in row:
        if isinstance(out, Label):
            counts[out.cls - 1] += 1
        elif isinstance(out, Probabilities):
            counts[out.argmax() - 1] += 1
    return counts


def majority_vote(row: Sequence[LFOutput], T: int) -> int:
    """Most voted class (1-based); ties and all-abstain rows resolve to the lowest index."""
    return int(np.argmax(_row_counts(row, T))) + 1


def mv_distribution(row: Sequence[LFOutput], T: int) -> np.ndarray:
    counts = _row_counts(row, T).astype(float)
    total = counts.sum()
    if total == 0:
        return np.full(T, 1.0 / T)
    return counts / total


# ---------------------------------------------------------------- file formats


def parse_cell(cell, T: int | None = None) -> LFOutput:
    if isinstance(cell, list):
        return _make_probs([float(v) for v in cell], T, cell)
    if isinstance(cell, bool):
        raise DatasetError(f"malformed cell {cell!r}", "datamodel")
    if isinstance(cell, int):
        return _make_label(cell, T)
    if not isinstance(cell, str):
        raise DatasetError(f"malformed cell {cell!r}", "datamodel")
    text = cell.strip()
    if text == "?":
        return ABSTAIN
    if text.startswith("p:"):
        try:
            values = [float(v) for v in text[2:].split("|")]
        except ValueError:
            raise DatasetError(f"malformed cell {cell!r}", "datamodel") from None
        return _make_probs(values, T, cell)
    try:
        value = int(text)
    except ValueError:
        raise DatasetError(f"malformed cell {cell!r}", "datamodel") from None
    return _make_label(value, T)


def _make_label(value: int, T: int | None) -> Label:
    if value < 1 or (T is not None and value > T):
        raise DatasetError("label out of range", "datamodel")
    return Label(value)


def _make_probs(values: list[float], T: int | None, raw) -> Probabilities:
    p = np.asarray(values, dtype=float)
    if T is not None and len(p) != T:
        raise DatasetError(f"probability vector of wrong length in {raw!r}", "datamodel")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_SUM_TOL:
        raise DatasetError(f"probabilities must be nonnegative and sum to 1 in {raw!r}", "datamodel")
    if abs(p.sum() - 1.0) > 1e-12:
        p = p / p.sum()
    return Probabilities(tuple(float(v) for v in p))


def _infer_T(rows: list[list[LFOutput]]) -> int:
    T = 2
    for row in rows:
        for out in row:
            if isinstance(out, Label):
                T = max(T, out.cls)
            elif isinstance(out, Probabilities):
                T = max(T, len(out.probs))
    return T


def _build(rows: list[list[LFOutput]], T: int | None, labeled: Mapping[int, int]) -> WeakDataset:
    if not rows:
        raise DatasetError("empty dataset", "datamodel")
    if T is None:
        T = _infer_T(rows)
        lengths = {len(o.probs) for r in rows for o in r if isinstance(o, Probabilities)}
        if lengths - {T}:
            raise DatasetError("probability vector of wrong length", "datamodel")
    return WeakDataset.from_outputs(rows, T, labeled)


def _read_csv(text: str) -> WeakDataset:
    T = None
    rows: list[list[LFOutput]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "T":
                try:
                    T = int(value)
                except ValueError:
                    raise DatasetError(f"line {lineno}: bad header {line!r}", "datamodel") from None
            continue
        rows.append([parse_cell(c, T) for c in line.split(",")])
    return _build(rows, T, {})


def _read_json(text: str) -> WeakDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON: {exc}", "datamodel") from None
    if not isinstance(doc, dict) or "outputs" not in doc:
        raise DatasetError("JSON dataset needs an 'outputs' field", "datamodel")
    T = doc.get("T")
    rows = [[parse_cell(c, T) for c in row] for row in doc["outputs"]]
    try:
        labeled = {int(k): int(v) for k, v in doc.get("labels", {}).items()}
    except (TypeError, ValueError, AttributeError):
        raise DatasetError("malformed 'labels' field", "datamodel") from None
    return _build(rows, T, labeled)


def load_dataset(source: Union[bytes, str, Path, BinaryIO], format: str | None = None) -> WeakDataset:
    """Parse a dataset from bytes, a binary stream or a file path.

    ``format`` is ``"csv"`` or ``"json"``; for paths it defaults to the suffix.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        format = format or path.suffix.lstrip(".").lower()
        data = path.read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
    text = data.decode("utf-8")
    if format == "csv":
        return _read_csv(text)
    if format == "json":
        return _read_json(text)
    raise DatasetError(f"unknown dataset format {format!r}", "datamodel")


def _cell_text(out: LFOutput) -> str:
    if isinstance(out, Label):
        return str(out.cls)
    if isinstance(out, Probabilities):
        return "p:" + "|".join(repr(float(v)) for v in out.probs)
    return "?"


def dump_dataset(dataset: WeakDataset, format: str = "json") -> bytes:
    """Serialize to the on-disk grammar. CSV cannot carry labels; use JSON for those."""
    rows = [[_cell_text(o) for o in dataset.row(i)] for i in range(dataset.n)]
    if format == "csv":
        buf = io.StringIO()
        buf.write(f"#T={dataset.T}\n")
        for row in rows:
            buf.write(",".join(row) + "\n")
        return buf.getvalue().encode("utf-8")
    if format == "json":
        doc = {"T": dataset.T, "outputs": rows}
        if dataset.labeled:
            doc["labels"] = {str(k): v for k, v in sorted(dataset.labeled.items())}
        return json.dumps(doc, indent=1).encode("utf-8")
    raise DatasetError(f"unknown dataset format {format!r}", "datamodel")
