import csv
import json

import numpy as np
import pytest

from mmpws import metrics
from mmpws.cli import EXIT_INPUT, EXIT_OK, fmt, main
from mmpws.datamodel import dump_dataset, load_dataset, mv_distribution
from mmpws.synth import synthesize


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def workspace(tmp_path):
    ds, _ = synthesize(400, [0.8, 0.7, 0.65], [0.1, 0.2, 0.1], seed=11)
    (tmp_path / "data.json").write_bytes(dump_dataset(ds, "json"))

    def run(cmd, config, *extra):
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps({"dataset": "data.json", **config}))
        return main([cmd, "--config", str(path), "--out", str(tmp_path / "out"), *extra])

    run.out = tmp_path / "out"
    run.root = tmp_path
    run.dataset = ds
    return run


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(-0.0) == "0"
    assert fmt(np.float64(2.0)) == "2"


def test_predict(workspace):
    assert workspace("predict", {"seed": 4}) == EXIT_OK
    rows = _read_csv(workspace.out / "predictions.csv")
    assert len(rows) == 400 and list(rows[0]) == ["instance", "p1", "p2"]
    sums = [float(r["p1"]) + float(r["p2"]) for r in rows]
    assert max(abs(s - 1) for s in sums) <= 2e-9
    report = json.loads((workspace.out / "report.json").read_text())
    model = json.loads((workspace.out / "model.json").read_text())
    assert report["minimax_risk"] == model["minimax_risk"]
    assert len(report["labeled_indices"]) == 100 and report["seed"] == 4
    assert report["solver"]["converged"]


def test_empty_dataset(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("#T=2\n")
    (tmp_path / "run.json").write_text(json.dumps({"dataset": "empty.csv"}))
    assert main(["predict", "--config", str(tmp_path / "run.json")]) == EXIT_INPUT
    assert "empty dataset" in capsys.readouterr().err


def test_missing_dataset_and_bad_config(tmp_path, capsys):
    (tmp_path / "run.json").write_text(json.dumps({"dataset": "nope.csv"}))
    assert main(["predict", "--config", str(tmp_path / "run.json")]) == EXIT_INPUT
    (tmp_path / "bad.json").write_text("{")
    assert main(["predict", "--config", str(tmp_path / "bad.json")]) == EXIT_INPUT
    assert "not valid JSON" in capsys.readouterr().err


def test_threshold_groups(workspace):
    groups = [{"kind": "threshold", "p": [0.9, 0.7, 0.5]}]
    assert workspace("intervals", {"groups": groups}) == EXIT_OK
    rows = _read_csv(workspace.out / "intervals.csv")
    doc = json.loads((workspace.out / "intervals.json").read_text())
    assert len(rows) + len(doc["errors"]) == 6
    assert list(rows[0]) == ["group_id", "label", "lower", "upper", "h_group", "contains"]
    for r in rows:
        assert r["contains"] == "1"
        assert float(r["lower"]) <= float(r["h_group"]) + 2e-6
        assert float(r["h_group"]) <= float(r["upper"]) + 2e-6
    assert len(doc["intervals"]) == len(rows)
    assert all(len(rec["mu_upper"]) == len(rec["mu_lower"]) for rec in doc["intervals"])


def test_empty_group_is_reported(workspace):
    groups = [{"kind": "vote", "r": [1.0, 0.0], "labels": [1]}, {"kind": "explicit", "indices": [0, 5], "id": "pair"}]
    assert workspace("intervals", {"groups": groups}) == EXIT_OK
    rows = _read_csv(workspace.out / "intervals.csv")
    doc = json.loads((workspace.out / "intervals.json").read_text())
    # a unanimous class-1 group may be empty; the r=0 group never is
    assert len(rows) + len(doc["errors"]) == 4
    assert {"vote1>=0", "pair"} <= {r["group_id"] for r in rows}


def test_vacuous_lambda_rows(workspace):
    config = {
        "features": [{"kind": "error", "lf": 1}, {"kind": "error", "lf": 2}],
        "prior": [{"component": 1, "tau": 0.2, "lambda": 1.5}, {"component": 2, "tau": 0.3, "lambda": 1.5}],
        "groups": [{"kind": "threshold", "p": [0.0]}, {"kind": "explicit", "indices": [1, 2, 3]}],
    }
    assert workspace("intervals", config) == EXIT_OK
    rows = _read_csv(workspace.out / "intervals.csv")
    assert len(rows) == 4
    assert all((r["lower"], r["upper"]) == ("0", "1") for r in rows)


def test_evaluate_perfect_setting(tmp_path):
    ds, _ = synthesize(200, [1.0, 1.0, 1.0], [0.2, 0.3, 0.1], seed=12)
    (tmp_path / "data.json").write_bytes(dump_dataset(ds, "json"))
    (tmp_path / "run.json").write_text(json.dumps({"dataset": "data.json", "estimate": "exact", "sweep": [0.0, 0.9]}))
    assert main(["evaluate", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / "o")]) == EXIT_OK
    doc = json.loads((tmp_path / "o" / "eval.json").read_text())
    assert doc["mmp"]["zero_one"] == 0
    assert doc["calibration_estimator"] == {"estimator": "top_label_binned", "bins": 15,
                                            "scheme": "equal_mass", "norm": "l1"}
    assert doc["logloss_clip"] == 1e-12
    sweep = _read_csv(tmp_path / "o" / "sweep_mmp.csv")
    assert [r["threshold"] for r in sweep] == ["0", "0.9"] and sweep[0]["coverage"] == "1"


def test_evaluate_mv_columns(workspace):
    assert workspace("evaluate", {}) == EXIT_OK
    doc = json.loads((workspace.out / "eval.json").read_text())
    ds = workspace.dataset
    h_mv = np.array([mv_distribution(ds.row(i), ds.T) for i in range(ds.n)])
    ref = metrics.evaluate(h_mv, ds.label_array()).to_dict()
    assert doc["mv"] == pytest.approx(ref, rel=1e-8)
    assert doc["mmp"]["n_evaluated"] == ds.n


def test_evaluate_needs_labels(tmp_path, capsys):
    ds, _ = synthesize(50, [0.8, 0.7], seed=1)
    (tmp_path / "data.csv").write_bytes(dump_dataset(ds, "csv"))
    (tmp_path / "run.json").write_text(json.dumps({"dataset": "data.csv"}))
    assert main(["evaluate", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "missing labels" in capsys.readouterr().err


def test_synth_outputs_reparse(tmp_path):
    config = {"synth": {"n": 120, "T": 3, "accuracies": [0.9, 0.6], "abstain_rates": [0.1, 0.3],
                        "correlated": [{"lf": 2, "base": 1, "kappa": 1.0}]}}
    (tmp_path / "run.json").write_text(json.dumps(config))
    assert main(["synth", "--config", str(tmp_path / "run.json"), "--seed", "3", "--out", str(tmp_path / "s")]) == 0
    ds = load_dataset(tmp_path / "s" / "dataset.json")
    flat = load_dataset(tmp_path / "s" / "dataset.csv")
    truth = _read_csv(tmp_path / "s" / "truth.csv")
    assert ds.n == 120 and ds.T == 3 and len(ds.labeled) == 120
    assert np.array_equal(flat.labels, ds.labels) and not flat.labeled
    assert [int(r["label"]) for r in truth] == ds.label_array().tolist()
    assert np.array_equal(ds.labels[:, 0], ds.labels[:, 1])


def test_synth_feeds_predict(tmp_path):
    (tmp_path / "gen.json").write_text(json.dumps({"synth": {"n": 150, "accuracies": [0.8, 0.75, 0.7]}, "output_dir": "gen"}))
    assert main(["synth", "--config", str(tmp_path / "gen.json")]) == 0
    (tmp_path / "run.json").write_text(json.dumps({"dataset": {"path": "gen/dataset.json", "format": "json"},
                                                   "output_dir": "fit"}))
    assert main(["predict", "--config", str(tmp_path / "run.json")]) == 0
    assert (tmp_path / "fit" / "predictions.csv").exists()
