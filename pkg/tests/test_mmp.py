import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import interior_estimate, labeled_estimate, random_features
from mmpws.datamodel import Label, WeakDataset
from mmpws.errors import EmptyGroupError, FingerprintError
from mmpws.features import FeatureComponent as C
from mmpws.features import FeatureMatrix, build_features, default_spec
from mmpws.mmp import MMPModel, fit, group_prediction, predict, risk_bound_diag
from mmpws.solver import mmp_objective
from mmpws.uncertainty import ExpectationEstimate, assemble, ensure_feasible


def _est(tau, lam):
    return ExpectationEstimate(np.atleast_1d(tau), np.atleast_1d(lam), ("prior",) * np.size(tau))


def test_worked_case():
    f = build_features(WeakDataset.from_outputs([[Label(1)]], 2), [C("error", 1)])
    model = fit(f, _est(0.2, 0.0))
    assert model.mu[0] == pytest.approx(-1.3863, abs=1e-4)
    assert model.minimax_risk == pytest.approx(0.5004, abs=1e-4)


def test_vacuous_lambda_gives_uniform():
    rng = np.random.default_rng(0)
    f = random_features(rng, 10, 4, 3)
    model = fit(f, _est(rng.random(3), np.full(3, 100.0)))
    assert np.all(model.mu == 0)
    assert model.minimax_risk == pytest.approx(np.log(4))
    assert predict(model, f) == pytest.approx(np.full((10, 4), 0.25))


def test_hand_evaluated_prediction():
    f = build_features(WeakDataset.from_outputs([[Label(1)]], 2), [C("error", 1)])
    model = MMPModel(np.array([-2.0]), 0.0, fit(f, _est(0.2, 0.0)).spec_fingerprint, "")
    assert predict(model, f)[0] == pytest.approx([0.8808, 0.1192], abs=1e-4)


def test_duplicated_component_is_redundant():
    rng = np.random.default_rng(1)
    ds = WeakDataset.from_label_matrix(rng.integers(0, 3, size=(40, 3)), 2, {i: int(rng.integers(1, 3)) for i in range(20)})
    spec = default_spec(ds)
    f1 = build_features(ds, spec)
    f2 = build_features(ds, spec + [spec[0]])
    e1 = ensure_feasible(assemble(f1, ds), f1)
    e2 = ExpectationEstimate(np.append(e1.tau_hat, e1.tau_hat[0]), np.append(e1.lam, e1.lam[0]),
                             e1.provenance + (e1.provenance[0],))
    m1, m2 = fit(f1, e1), fit(f2, e2)
    assert m1.minimax_risk == pytest.approx(m2.minimax_risk, abs=1e-7)
    assert predict(m1, f1) == pytest.approx(predict(m2, f2), abs=1e-4)


def test_label_free_rows_share_predictions():
    ds = WeakDataset.from_label_matrix(np.array([[1, 2], [1, 2], [2, 2]]), 2)
    f = build_features(ds, [C("pair_labels", 1, 2), C("abstain", 1)])
    model = fit(f, assemble(f, ds))
    h = predict(model, f)
    assert np.array_equal(h[0], h[1])


def test_fingerprint_mismatch():
    ds = WeakDataset.from_label_matrix(np.array([[1, 2], [2, 2]]), 2)
    f = build_features(ds, [C("error", 1)])
    g = build_features(ds, [C("error", 2)])
    model = fit(f, _est(0.3, 0.1))
    with pytest.raises(FingerprintError):
        predict(model, g)


def test_model_json_round_trip():
    rng = np.random.default_rng(2)
    f = random_features(rng, 8, 3, 3)
    est, _ = interior_estimate(rng, f)
    model = fit(f, est)
    back = MMPModel.from_json(json.loads(json.dumps(model.to_json())))
    assert np.array_equal(back.mu, model.mu)
    assert back.spec_fingerprint == model.spec_fingerprint
    assert back.estimate_fingerprint == est.fingerprint()
    assert np.array_equal(predict(back, f), predict(model, f))


def test_group_prediction_examples():
    h = np.array([[0.2, 0.8], [0.6, 0.4]])
    assert group_prediction(h, [0, 1], 1) == pytest.approx(0.4)
    assert group_prediction(h, [1], 2) == pytest.approx(0.4)
    assert group_prediction(np.full((5, 3), 1 / 3), [0, 4], 2) == pytest.approx(1 / 3)
    with pytest.raises(EmptyGroupError):
        group_prediction(h, [], 1)


def test_risk_bound_correction_term():
    f = build_features(WeakDataset.from_outputs([[Label(1)]], 2, {0: 1}), [C("error", 1)])
    model = MMPModel(np.array([-2.0]), 0.4, fit(f, _est(0.2, 0.0)).spec_fingerprint, "")
    diag = risk_bound_diag(model, f, np.array([0.25]), _est(0.2, 0.0), np.array([1]))
    assert diag.bound == pytest.approx(0.4 + 0.05 * 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_estimate_risk_bound(seed):
    rng = np.random.default_rng(seed)
    n, T, d = int(rng.integers(2, 30)), int(rng.integers(2, 4)), int(rng.integers(1, 6))
    f = random_features(rng, n, T, d)
    y = rng.integers(1, T + 1, size=n)
    tau = f.true_expectation(y)
    est = ExpectationEstimate(tau, np.zeros(d), ("exact",) * d)
    model = fit(f, est)
    diag = risk_bound_diag(model, f, tau, est, y)
    assert diag.bound == pytest.approx(model.minimax_risk, abs=1e-12)
    assert diag.slack >= -1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_covering_lambda_risk_bound(seed):
    rng = np.random.default_rng(seed)
    n, T, d = int(rng.integers(2, 30)), int(rng.integers(2, 4)), int(rng.integers(1, 6))
    f = random_features(rng, n, T, d, binary=True)
    est, tau, y = labeled_estimate(rng, f)
    model = fit(f, est)
    diag = risk_bound_diag(model, f, tau, est, y)
    assert diag.bound <= model.minimax_risk + 1e-12
    assert diag.slack >= -1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_predictions_are_distributions(seed):
    rng = np.random.default_rng(seed)
    f = random_features(rng, 20, 3, 4)
    est, _ = interior_estimate(rng, f)
    h = predict(fit(f, est), f)
    assert np.all(h > 0) and np.all(h < 1)
    assert np.abs(h.sum(axis=1) - 1).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_class_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n, T, m = int(rng.integers(5, 30)), 3, int(rng.integers(1, 4))
    votes = rng.integers(0, T + 1, size=(n, m))
    labels = {i: int(rng.integers(1, T + 1)) for i in range(n // 2)}
    perm = rng.permutation(T) + 1  # class c becomes perm[c - 1]
    relabel = np.concatenate([[0], perm])
    ds = WeakDataset.from_label_matrix(votes, T, labels)
    ds_p = WeakDataset.from_label_matrix(relabel[votes], T, {i: int(perm[c - 1]) for i, c in labels.items()})
    spec = [C("error", j) for j in range(1, m + 1)] + [C("abstain", j) for j in range(1, m + 1)]
    f, fp = build_features(ds, spec), build_features(ds_p, spec)
    est = assemble(f, ds)
    est_p = assemble(fp, ds_p)
    assert est_p.tau_hat == pytest.approx(est.tau_hat, abs=1e-12)
    h = predict(fit(f, est), f)
    hp = predict(fit(fp, est_p), fp)
    # column c of h moves to column perm[c - 1] of hp
    assert hp[:, perm - 1] == pytest.approx(h, abs=1e-6)


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    f = random_features(rng, 30, 2, 5)
    est, _ = interior_estimate(rng, f)
    a, b = fit(f, est), fit(f, est)
    assert np.array_equal(a.mu, b.mu) and a.minimax_risk == b.minimax_risk
    assert a.minimax_risk == pytest.approx(mmp_objective(f, est, a.mu), abs=1e-15)


def test_feature_matrix_rows_of_prediction():
    rng = np.random.default_rng(4)
    f = random_features(rng, 6, 2, 2)
    est, _ = interior_estimate(rng, f)
    model = fit(f, est)
    sub = FeatureMatrix(f.components, f.values[:3], f.label_dependent, f.mv[:3])
    assert predict(model, sub) == pytest.approx(predict(model, f)[:3])
