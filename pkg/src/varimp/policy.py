"""Predict a normalized stiffness profile from task-state features.

Two small regressors over the 6 unconstrained Cholesky parameters: a
k-NN lookup with inverse-distance weighting (averaging is closed in
parameter space), and ridge regression minimizing the mean squared error
on the parameters. Either way the decoded matrix is SPD for any input;
predicted eigenvalues are clamped into [0, 1] afterwards because the
decoding alone does not bound them from above.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .inference import NormStats, normalize_states
from .labels import LabelSet
from .spd import CholeskyParams, Spd3, cholesky_lower, sym_eig

__all__ = ["PolicyModel", "fit", "predict", "predict_params", "save_model", "load_model"]

MODEL_FORMAT = "varimp-policy/1"
EIG_FLOOR = 1e-9
VARIANTS = ("knn", "ridge")


@dataclass(frozen=True)
class PolicyModel:
    """A fitted stiffness-profile regressor; immutable, safe to share."""

    variant: str
    stats: NormStats
    kappa_min: float
    kappa_max: float
    # knn
    train_states: Optional[np.ndarray] = None  # (N, d), normalized
    train_params: Optional[np.ndarray] = None  # (N, 6)
    k: int = 5
    # ridge
    weights: Optional[np.ndarray] = None  # (d + 1, 6), row 0 is the bias


def fit(label_set: LabelSet, variant: str = "knn", *, k: int = 5,
        ridge_lambda: float = 1e-6) -> PolicyModel:
    """Fit a policy on a label set.

    knn stores the data; ridge solves the regularized least-squares
    problem over the 6 parameters in closed form. Both are deterministic.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    labels = label_set.labels
    if len(labels) < 10:
        raise ValueError(f"need at least 10 labels, got {len(labels)}")
    raw_states = np.array([lb.state for lb in labels])
    params = np.array([lb.params.as_array() for lb in labels])
    states, stats = normalize_states(raw_states)
    common = dict(stats=stats, kappa_min=label_set.kappa_min,
                  kappa_max=label_set.kappa_max)
    if variant == "knn":
        if not 1 <= k <= len(labels):
            raise ValueError(f"k must be in [1, {len(labels)}], got {k}")
        return PolicyModel(variant="knn", train_states=states,
                           train_params=params, k=k, **common)
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    x = np.hstack([np.ones((states.shape[0], 1)), states])
    d = states.shape[1]
    penalty = np.hstack([np.zeros((d, 1)), np.eye(d)])  # bias not penalized
    a = np.vstack([x, np.sqrt(ridge_lambda) * penalty])
    b = np.vstack([params, np.zeros((d, params.shape[1]))])
    weights, *_ = np.linalg.lstsq(a, b, rcond=None)
    return PolicyModel(variant="ridge", weights=weights, **common)


def predict_params(model: PolicyModel, state) -> np.ndarray:
    """Predicted 6-vector of Cholesky parameters for one raw state."""
    q = model.stats.apply(np.asarray(state, dtype=float).reshape(1, -1))[0]
    if model.variant == "knn":
        d2 = ((model.train_states - q) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")[: model.k]
        dists = np.sqrt(d2[order])
        if dists[0] == 0.0:
            exact = order[dists == 0.0]
            return model.train_params[exact].mean(axis=0)
        w = 1.0 / dists
        w /= w.sum()
        return w @ model.train_params[order]
    return np.concatenate([[1.0], q]) @ model.weights


def predict(model: PolicyModel, state) -> Spd3:
    """Normalized stiffness profile with eigenvalues clamped to [0, 1].

    The prediction is expressed in the wrist-camera frame the labels were
    built in. Decoding goes through the raw Cholesky factor so that even
    wildly extrapolated parameters (arbitrarily ill-conditioned decodes)
    land safely inside [EIG_FLOOR, 1] after the clamp.
    """
    params = CholeskyParams.from_array(predict_params(model, state))
    low = cholesky_lower(params)
    pair = sym_eig(low @ low.T)
    lam = np.clip(pair.lam, EIG_FLOOR, 1.0)
    return Spd3.from_matrix((pair.q * lam) @ pair.q.T)


def save_model(model: PolicyModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "variant": model.variant,
        "norm_mean": [float(v) for v in model.stats.mean],
        "norm_std": [float(v) for v in model.stats.std],
        "norm_constant": [bool(v) for v in model.stats.constant],
        "kappa_min": model.kappa_min,
        "kappa_max": model.kappa_max,
    }
    if model.variant == "knn":
        doc["k"] = model.k
        doc["train_states"] = model.train_states.tolist()
        doc["train_params"] = model.train_params.tolist()
    else:
        doc["weights"] = model.weights.tolist()
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> PolicyModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid model file: {e}") from e
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(
            f"{path}: unsupported model format {doc.get('format')!r}"
        )
    stats = NormStats(
        mean=np.array(doc["norm_mean"], dtype=float),
        std=np.array(doc["norm_std"], dtype=float),
        constant=np.array(doc["norm_constant"], dtype=bool),
    )
    common = dict(stats=stats, kappa_min=float(doc["kappa_min"]),
                  kappa_max=float(doc["kappa_max"]))
    if doc["variant"] == "knn":
        return PolicyModel(
            variant="knn",
            train_states=np.array(doc["train_states"], dtype=float),
            train_params=np.array(doc["train_params"], dtype=float),
            k=int(doc["k"]),
            **common,
        )
    return PolicyModel(variant="ridge",
                       weights=np.array(doc["weights"], dtype=float), **common)
