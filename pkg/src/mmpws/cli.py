"""Command-line entry point: ``mmpws {predict,intervals,evaluate,synth} --config run.json``.

Exit codes: 0 success, 1 solver did not converge (outputs are still written),
2 input error, 3 empty uncertainty set after repair.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .datamodel import WeakDataset, dump_dataset, load_dataset
from .errors import EmptyGroupError, InfeasibleError, WSError
from .features import FeatureComponent, FeatureMatrix, build_features, default_spec
from .intervals import Group, confidence_interval, explicit_group, groups_by_prediction, groups_by_vote
from .mmp import MMPModel, fit, group_prediction, predict
from .solver import SolverConfig
from .synth import SynthParams, generate
from .uncertainty import EXACT, ExpectationEstimate, LambdaPolicy, assemble, ensure_feasible

log = logging.getLogger("mmpws")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3


def fmt(x) -> str:
    return format(float(x) + 0.0, ".9g")


def _round(obj):
    """Round every float to 9 significant digits so JSON output is stable and compact."""
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, np.floating):
        return float(fmt(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_round(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_round(doc), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else ("" if v is None else v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


@dataclass
class RunConfig:
    dataset_path: Path | None
    dataset_format: str | None
    features: object = "default"
    lambda_policy: LambdaPolicy = field(default_factory=LambdaPolicy)
    prior: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    labeled_size: int | None = 100
    estimate: str = "labeled"
    groups: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    synth: dict | None = None
    output_dir: Path = Path("out")
    seed: int = 0

    @classmethod
    def load(cls, path: Path, seed: int | None = None, out: str | None = None) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise WSError(f"cannot read config: {exc}", "cli") from None
        except json.JSONDecodeError as exc:
            raise WSError(f"config is not valid JSON: {exc}", "cli") from None
        return cls.from_dict(doc, Path(path).parent, seed, out)

    @classmethod
    def from_dict(cls, doc: dict, base: Path = Path("."), seed: int | None = None, out: str | None = None):
        if not isinstance(doc, dict):
            raise WSError("config must be a JSON object", "cli")
        run_seed = int(doc.get("seed", 0) if seed is None else seed)
        ds = doc.get("dataset")
        if isinstance(ds, str):
            ds = {"path": ds}
        ds_path = None if ds is None else base / ds["path"]
        solver_doc = dict(doc.get("solver", {}))
        solver_doc["seed"] = run_seed
        prior = {}
        for p in doc.get("prior", []):
            # components are numbered from 1 in configs
            prior[int(p["component"]) - 1] = (float(p["tau"]), float(p["lambda"]))
        estimate = doc.get("estimate", "labeled")
        if estimate not in ("labeled", "exact"):
            raise WSError(f"unknown estimate source {estimate!r}", "cli")
        out_dir = Path(out) if out is not None else base / doc.get("output_dir", "out")
        return cls(
            ds_path,
            None if ds is None else ds.get("format"),
            doc.get("features", "default"),
            LambdaPolicy.from_dict(doc.get("lambda_policy", {})),
            prior,
            SolverConfig.from_dict(solver_doc),
            doc.get("labeled_size", 100),
            estimate,
            list(doc.get("groups", [])),
            [float(t) for t in doc.get("sweep", [])],
            doc.get("synth"),
            out_dir,
            run_seed,
        )


@dataclass
class Pipeline:
    dataset: WeakDataset
    features: FeatureMatrix
    estimate: ExpectationEstimate
    repaired: bool
    labeled_indices: list[int]
    model: MMPModel
    h: np.ndarray


def _load(cfg: RunConfig) -> WeakDataset:
    if cfg.dataset_path is None:
        raise WSError("config has no dataset", "cli")
    if not cfg.dataset_path.exists():
        raise WSError(f"dataset not found: {cfg.dataset_path}", "cli")
    return load_dataset(cfg.dataset_path, cfg.dataset_format)


def _spec(cfg: RunConfig, ds: WeakDataset) -> list[FeatureComponent]:
    if cfg.features == "default":
        return default_spec(ds)
    if not isinstance(cfg.features, list):
        raise WSError("features must be 'default' or a list of components", "cli")
    return [FeatureComponent.from_dict(c) for c in cfg.features]


def _labeled_subset(cfg: RunConfig, ds: WeakDataset) -> list[int]:
    available = sorted(ds.labeled)
    if cfg.labeled_size is None or cfg.labeled_size >= len(available):
        return available
    rng = np.random.default_rng(cfg.seed)
    return sorted(int(i) for i in rng.choice(available, size=int(cfg.labeled_size), replace=False))


def run_pipeline(cfg: RunConfig) -> Pipeline:
    ds = _load(cfg)
    features = build_features(ds, _spec(cfg, ds))
    if cfg.estimate == "exact":
        y = _full_labels(ds)
        tau = features.true_expectation(y)
        estimate = ExpectationEstimate(tau, np.zeros_like(tau), (EXACT,) * tau.size)
        chosen = list(range(ds.n))
    else:
        chosen = _labeled_subset(cfg, ds)
        sub = ds.with_labeled({i: ds.labeled[i] for i in chosen})
        estimate = assemble(features, sub, cfg.lambda_policy, cfg.prior)
    repaired_est = ensure_feasible(estimate, features)
    model = fit(features, repaired_est, cfg.solver)
    h = predict(model, features)
    return Pipeline(ds, features, repaired_est, repaired_est is not estimate, chosen, model, h)


def _full_labels(ds: WeakDataset) -> np.ndarray:
    if len(ds.labeled) != ds.n:
        raise WSError(f"missing labels: {ds.n - len(ds.labeled)} of {ds.n} instances are unlabeled", "cli")
    return ds.label_array()


def _prepare_out(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def cmd_predict(cfg: RunConfig) -> int:
    run = run_pipeline(cfg)
    out = _prepare_out(cfg)
    T = run.features.T
    write_csv(out / "predictions.csv", ["instance"] + [f"p{y}" for y in range(1, T + 1)],
              ([i] + list(row) for i, row in enumerate(run.h)))
    write_json(out / "model.json", run.model.to_json())
    report = {
        "minimax_risk": run.model.minimax_risk,
        "solver": run.model.solver,
        "estimate": {
            "tau_hat": run.estimate.tau_hat,
            "lambda": run.estimate.lam,
            "provenance": list(run.estimate.provenance),
            "repaired": run.repaired,
        },
        "labeled_indices": run.labeled_indices,
        "n": run.features.n,
        "T": T,
        "features": [str(c) for c in run.features.components],
        "seed": cfg.seed,
    }
    write_json(out / "report.json", report)
    return EXIT_OK if run.model.solver["converged"] else EXIT_NOT_CONVERGED


def _expand_groups(cfg: RunConfig, run: Pipeline) -> list[tuple[dict, object]]:
    """Each declaration becomes (declaration, Group or error message) entries."""
    T = run.features.T
    out = []
    for decl in cfg.groups:
        kind = decl.get("kind")
        labels = decl.get("labels", list(range(1, T + 1)))
        if kind == "threshold":
            for p in decl["p"]:
                for y in labels:
                    out.append(({"kind": kind, "p": p, "y": y}, lambda p=p, y=y: groups_by_prediction(run.h, p, y), y))
        elif kind == "vote":
            for r in decl["r"]:
                for y in labels:
                    out.append(({"kind": kind, "r": r, "y": y}, lambda r=r, y=y: groups_by_vote(run.dataset, r, y), y))
        elif kind == "explicit":
            idx = decl["indices"]
            for y in labels:
                out.append(({"kind": kind, "y": y}, lambda idx=idx, gid=decl.get("id"): explicit_group(idx, gid), y))
        else:
            raise WSError(f"unknown group kind {kind!r}", "cli")
    return out


def cmd_intervals(cfg: RunConfig) -> int:
    run = run_pipeline(cfg)
    out = _prepare_out(cfg)
    cushion = 2 * cfg.solver.tol
    rows, records, errors = [], [], []
    for decl, make, y in _expand_groups(cfg, run):
        try:
            group: Group = make()
            if max(group.indices) >= run.features.n:
                raise WSError(f"group {group.id!r} refers to instances beyond n={run.features.n}", "cli")
        except (EmptyGroupError, WSError) as exc:
            errors.append({"declaration": decl, "error": str(exc)})
            log.warning("%s", exc)
            continue
        res = confidence_interval(run.features, run.estimate, group, y, cfg.solver)
        h_group = group_prediction(run.h, group.indices, y)
        contains = res.contains(h_group, cushion)
        rows.append([group.id, y, res.lower, res.upper, h_group, int(contains)])
        records.append({
            "group_id": group.id,
            "label": y,
            "size": len(group),
            "lower": res.lower,
            "upper": res.upper,
            "h_group": h_group,
            "contains": contains,
            "mu_upper": res.mu_upper,
            "mu_lower": res.mu_lower,
        })
    write_csv(out / "intervals.csv", ["group_id", "label", "lower", "upper", "h_group", "contains"], rows)
    write_json(out / "intervals.json", {"intervals": records, "errors": errors, "minimax_risk": run.model.minimax_risk})
    return EXIT_OK if run.model.solver["converged"] else EXIT_NOT_CONVERGED


def cmd_evaluate(cfg: RunConfig) -> int:
    ds = _load(cfg)
    y = _full_labels(ds)
    run = run_pipeline(cfg)
    out = _prepare_out(cfg)
    mv_h = run.dataset.mv_probabilities()
    bins = metrics.CALIBRATION_CONFIG["bins"]
    doc = {
        "mmp": metrics.evaluate(run.h, y, bins).to_dict(),
        "mv": metrics.evaluate(mv_h, y, bins).to_dict(),
        "calibration_estimator": dict(metrics.CALIBRATION_CONFIG, bins=min(bins, ds.n)),
        "logloss_clip": 1e-12,
        "minimax_risk": run.model.minimax_risk,
        "seed": cfg.seed,
    }
    write_json(out / "eval.json", doc)
    if cfg.sweep:
        for name, h in (("mmp", run.h), ("mv", mv_h)):
            pts = metrics.abstention_sweep(h, y, cfg.sweep)
            write_csv(out / f"sweep_{name}.csv", ["threshold", "brier", "coverage"],
                      ([p.threshold, p.brier, p.coverage] for p in pts))
    return EXIT_OK if run.model.solver["converged"] else EXIT_NOT_CONVERGED


def cmd_synth(cfg: RunConfig) -> int:
    if not cfg.synth:
        raise WSError("config has no 'synth' block", "cli")
    params = SynthParams.from_dict(cfg.synth, seed=cfg.seed)
    ds, y = generate(params)
    out = _prepare_out(cfg)
    (out / "dataset.json").write_bytes(dump_dataset(ds, "json"))
    (out / "dataset.csv").write_bytes(dump_dataset(ds, "csv"))
    write_csv(out / "truth.csv", ["instance", "label"], enumerate(y.tolist()))
    return EXIT_OK


COMMANDS = {"predict": cmd_predict, "intervals": cmd_intervals, "evaluate": cmd_evaluate, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmpws", description="Minimax weak-supervision label model")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="run configuration (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(Path(args.config), args.seed, args.out)
        code = COMMANDS[args.command](cfg)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (WSError, KeyError, TypeError, ValueError) as exc:
        msg = str(exc) if isinstance(exc, WSError) else f"cli: bad config: {exc!r}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    if code == EXIT_NOT_CONVERGED:
        print("warning: solver did not converge; outputs flagged", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
