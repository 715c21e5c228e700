"""Minimax probabilistic label aggregation for programmatic weak supervision."""

from .datamodel import ABSTAIN, Abstain, Label, Probabilities, WeakDataset, dump_dataset, load_dataset
from .errors import WSError
from .features import FeatureComponent, FeatureMatrix, build_features, default_spec
from .intervals import Group, confidence_interval, groups_by_prediction, groups_by_vote
from .mmp import MMPModel, fit, group_prediction, predict
from .solver import SolverConfig
from .uncertainty import ExpectationEstimate, LambdaPolicy, assemble, ensure_feasible

__all__ = [
    "ABSTAIN", "Abstain", "Label", "Probabilities", "WeakDataset", "dump_dataset", "load_dataset",
    "WSError", "FeatureComponent", "FeatureMatrix", "build_features", "default_spec",
    "Group", "confidence_interval", "groups_by_prediction", "groups_by_vote",
    "MMPModel", "fit", "group_prediction", "predict", "SolverConfig",
    "ExpectationEstimate", "LambdaPolicy", "assemble", "ensure_feasible",
]
