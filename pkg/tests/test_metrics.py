import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmpws import metrics
from mmpws.errors import DatasetError


def _onehot(labels, T=2):
    return np.eye(T)[np.asarray(labels) - 1]


def test_brier_examples():
    y = np.array([1, 2, 2, 1])
    assert metrics.brier(_onehot(y), y) == 0
    assert metrics.brier(np.full((4, 2), 0.5), y) == 0.25
    h = np.where(_onehot(y) == 1, 0.9, 0.1)
    assert metrics.brier(h, y) == pytest.approx(0.01)


def test_logloss_examples():
    y = np.array([1, 2])
    assert metrics.logloss(np.full((2, 2), 0.5), y) == pytest.approx(np.log(2))
    assert metrics.logloss(_onehot(y), y) == 0
    assert metrics.logloss(1 - _onehot(y), y) == pytest.approx(27.631, abs=1e-3)


def test_zero_one_examples():
    y = np.array([2, 2, 2])
    assert metrics.zero_one(_onehot(y), y) == 0
    # ties go to the lowest class
    assert metrics.zero_one(np.full((3, 2), 0.5), y) == 1
    assert metrics.zero_one(np.array([[0.4, 0.6]]), np.array([2])) == 0


def test_missing_or_bad_labels():
    h = np.full((3, 2), 0.5)
    with pytest.raises(DatasetError):
        metrics.brier(h, np.array([1, 2]))
    with pytest.raises(DatasetError):
        metrics.logloss(h, np.array([1, 2, 3]))


def test_calibration_constant_predictor():
    # every bin of 10 holds 7 instances of class 1
    y = np.tile([1] * 7 + [2] * 3, 15)
    h = np.tile([0.7, 0.3], (150, 1))
    assert metrics.calibration_error(h, y) == pytest.approx(0.0, abs=1e-12)


def test_calibration_constant_predictor_large_sample():
    rng = np.random.default_rng(0)
    y = np.where(rng.random(10_000) < 0.7, 1, 2)
    assert metrics.calibration_error(np.tile([0.7, 0.3], (10_000, 1)), y) < 0.015


def test_calibration_examples():
    y = np.array([1, 2] * 20)
    assert metrics.calibration_error(_onehot(y), y) == 0
    assert metrics.calibration_error(np.tile([1.0, 0.0], (40, 1)), y) == pytest.approx(0.5)
    with pytest.raises(DatasetError):
        metrics.calibration_error(np.full((10, 2), 0.5), np.ones(10, dtype=int))


def test_calibration_equal_mass_bins():
    # distinct confidences in two halves: half well calibrated, half overconfident
    conf = np.concatenate([np.full(10, 0.6), np.full(10, 0.9)])
    h = np.column_stack([conf, 1 - conf])
    y = np.array([1] * 6 + [2] * 4 + [1] * 5 + [2] * 5)
    assert metrics.calibration_error(h, y, bins=2) == pytest.approx(0.5 * 0.0 + 0.5 * 0.4)
    assert metrics.calibration_error(h, y, bins=2, scheme="equal_width") == pytest.approx(0.2)


def test_evaluate_report():
    y = np.array([1, 2, 1])
    rep = metrics.evaluate(np.full((3, 2), 0.5), y)
    d = rep.to_dict()
    assert d["n_evaluated"] == 3 and d["brier"] == 0.25
    assert set(d) == {"brier", "logloss", "zero_one", "calibration_error", "n_evaluated"}


def test_sweep_examples():
    h = np.array([[0.95, 0.05], [0.45, 0.55]])
    y = np.array([1, 1])
    full, strict, none = metrics.abstention_sweep(h, y, [0.0, 0.9, 0.99])
    assert full.coverage == 1 and full.brier == pytest.approx(metrics.brier(h, y))
    assert strict.coverage == 0.5 and strict.brier == pytest.approx(0.05**2)
    assert none.coverage == 0 and none.brier is None
    with pytest.raises(ValueError):
        metrics.abstention_sweep(h, y, [1.5])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    n, T = int(rng.integers(1, 40)), int(rng.integers(2, 5))
    h = rng.dirichlet(np.ones(T), size=n)
    y = rng.integers(1, T + 1, size=n)
    assert metrics.zero_one(h, y) == metrics.zero_one(_onehot(np.argmax(h, axis=1) + 1, T), y)
    pts = metrics.abstention_sweep(h, y, np.linspace(0, 1, 11))
    cov = [p.coverage for p in pts]
    assert all(a >= b for a, b in zip(cov, cov[1:]))
    # raising the probability of the true class never increases the log-loss
    i = int(rng.integers(n))
    g = h.copy()
    g[i, y[i] - 1] += 0.1
    g[i] /= g[i].sum()
    assert metrics.logloss(g, y) <= metrics.logloss(h, y) + 1e-15
    assert 0 <= metrics.brier(h, y) <= 1
