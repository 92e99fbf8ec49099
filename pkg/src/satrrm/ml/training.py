"""Mini-batch SGD training, model persistence and payload prediction."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..optimizer import Assignment, SystemScenario, nearest_config
from .network import (
    CLASSIFICATION,
    REGRESSION,
    Cache,
    Network,
    backward,
    forward,
    grad_classification,
    grad_regression,
    init_network,
    loss_classification,
    loss_regression,
)
from .preprocess import Preprocessor, fit_preprocessor

MODEL_FORMAT = "satrrm-model/1"


class ModelFormatError(ValueError):
    """A model file is malformed or does not match the scenario."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    penalty_weight: float = 1.0
    seed: int = 0
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    hidden: tuple[int, ...] = (64, 32)
    pool_size: int = 4
    variance_threshold: float = 0.95
    whiten: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError("split fractions must be non-negative and sum to 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainSet:
    """Training targets for one split. Capacities and demand are normalized."""

    features: np.ndarray
    class_ids: np.ndarray
    capacities: np.ndarray
    demand: np.ndarray

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> "TrainSet":
        return TrainSet(self.features[idx], self.class_ids[idx], self.capacities[idx], self.demand[idx])


@dataclass
class History:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0


def split_indices(n: int, fractions=(0.70, 0.15, 0.15), seed: int = 0):
    """Disjoint train/validation/test index arrays from a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def evaluate_loss(net: Network, data: TrainSet, penalty: float = 1.0) -> float:
    out = forward(net, data.features)
    if net.head == CLASSIFICATION:
        return loss_classification(out, data.class_ids)
    return loss_regression(out, data.capacities, data.demand, penalty)


def train(train_set: TrainSet, val_set: TrainSet, cfg: TrainConfig, head: str, n_outputs: int):
    """Plain SGD; returns the parameters with the best validation loss.

    Deterministic given ``cfg.seed``: the same seed drives initialization and
    the per-epoch shuffles.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation splits must be non-empty")
    net = init_network(train_set.features.shape[1], list(cfg.hidden), n_outputs, head, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    best, best_val = net.copy(), evaluate_loss(net, val_set, cfg.penalty_weight)
    hist = History()
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = train_set.subset(order[start : start + cfg.batch_size])
            cache = Cache()
            out = forward(net, batch.features, cache)
            if head == CLASSIFICATION:
                grads = backward(net, cache, grad_classification(out, batch.class_ids), logits=True)
            else:
                g = grad_regression(out, batch.capacities, batch.demand, cfg.penalty_weight)
                grads = backward(net, cache, g)
            for p, g in zip(net.params, grads):
                p -= cfg.learning_rate * g
        tr = evaluate_loss(net, train_set, cfg.penalty_weight)
        va = evaluate_loss(net, val_set, cfg.penalty_weight)
        hist.epochs.append(epoch)
        hist.train_loss.append(tr)
        hist.val_loss.append(va)
        if va < best_val:
            best, best_val, hist.best_epoch = net.copy(), va, epoch
    return best, hist


@dataclass
class Model:
    network: Network
    preprocessor: Preprocessor
    class_table: list[tuple[int, ...]]
    capacity_scale: float  # bps that map to 1.0
    n_beams: int

    @property
    def head(self) -> str:
        return self.network.head

    def features(self, pooled: np.ndarray) -> np.ndarray:
        flat = np.asarray(pooled, dtype=float).reshape(len(pooled), -1)
        return self.preprocessor.transform(flat)


def fit_model(
    pooled: np.ndarray,
    class_ids: np.ndarray,
    capacities: np.ndarray,
    demand: np.ndarray,
    class_table: list[tuple[int, ...]],
    cfg: TrainConfig,
    head: str,
    capacity_scale: float,
):
    """Split, fit the preprocessor on the training part, then train.

    ``pooled`` holds one max-pooled grid per sample; capacities and demand are
    in bps. Returns (model, history, (train, val, test) indices).
    """
    n = len(pooled)
    flat = np.asarray(pooled, dtype=float).reshape(n, -1)
    tr, va, te = split_indices(n, cfg.split, cfg.seed)
    pre = fit_preprocessor(flat[tr], cfg.pool_size, cfg.variance_threshold, whiten=cfg.whiten)
    full = TrainSet(
        pre.transform(flat),
        np.asarray(class_ids, dtype=int),
        np.asarray(capacities, dtype=float) / capacity_scale,
        np.asarray(demand, dtype=float) / capacity_scale,
    )
    n_out = len(class_table) if head == CLASSIFICATION else full.capacities.shape[1]
    net, hist = train(full.subset(tr), full.subset(va), cfg, head, n_out)
    model = Model(net, pre, list(class_table), capacity_scale, full.capacities.shape[1])
    return model, hist, (tr, va, te)


def predict_config(model: Model, x: np.ndarray, demand, scenario: SystemScenario) -> Assignment:
    """Payload configuration for one preprocessed feature vector."""
    out = forward(model.network, x)
    if model.head == CLASSIFICATION:
        k = int(np.argmax(out))
        if not 0 <= k < len(model.class_table):
            raise RuntimeError(f"class id {k} missing from the class table")
        return Assignment.from_options(model.class_table[k], scenario)
    return nearest_config(out * model.capacity_scale, demand, scenario)


# -- persistence ---------------------------------------------------------


def model_to_dict(model: Model) -> dict:
    net, pre = model.network, model.preprocessor
    return {
        "format": MODEL_FORMAT,
        "head": net.head,
        "activation": net.activation,
        "layer_dims": list(net.layer_dims),
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "n_beams": model.n_beams,
        "capacity_scale": model.capacity_scale,
        "class_table": [list(v) for v in model.class_table],
        "preprocessor": {
            "pool_size": pre.pool_size,
            "feature_means": pre.feature_means.tolist(),
            "feature_stds": pre.feature_stds.tolist(),
            "pca_basis": pre.pca_basis.ravel().tolist(),
            "eigenvalues": pre.eigenvalues.tolist(),
            "n_components": pre.n_components,
            "whiten": pre.whiten,
        },
    }


def _field(d: dict, key: str, where: str = ""):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ModelFormatError(f"model file: missing or invalid field '{where}{key}'") from None


def model_from_dict(d: dict) -> Model:
    if _field(d, "format") != MODEL_FORMAT:
        raise ModelFormatError(f"model file: field 'format' must be {MODEL_FORMAT!r}")
    dims = [int(x) for x in _field(d, "layer_dims")]
    try:
        weights = [
            np.array(w, dtype=float).reshape(a, b)
            for w, a, b in zip(_field(d, "weights"), dims[:-1], dims[1:], strict=True)
        ]
    except (ValueError, TypeError):
        raise ModelFormatError("model file: field 'weights' does not match 'layer_dims'") from None
    try:
        biases = [np.array(b, dtype=float) for b in _field(d, "biases")]
        net = Network(dims, _field(d, "head"), weights, biases, _field(d, "activation"))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"model file: field 'biases' or 'head' invalid ({exc})") from None
    p = _field(d, "preprocessor")
    k = int(_field(p, "n_components", "preprocessor."))
    means = np.array(_field(p, "feature_means", "preprocessor."), dtype=float)
    try:
        basis = np.array(_field(p, "pca_basis", "preprocessor."), dtype=float).reshape(k, len(means))
    except ValueError:
        raise ModelFormatError("model file: field 'preprocessor.pca_basis' has the wrong size") from None
    pre = Preprocessor(
        pool_size=int(_field(p, "pool_size", "preprocessor.")),
        feature_means=means,
        feature_stds=np.array(_field(p, "feature_stds", "preprocessor."), dtype=float),
        pca_basis=basis,
        eigenvalues=np.array(_field(p, "eigenvalues", "preprocessor."), dtype=float),
        n_components=k,
        whiten=bool(_field(p, "whiten", "preprocessor.")),
    )
    return Model(
        network=net,
        preprocessor=pre,
        class_table=[tuple(int(x) for x in v) for v in _field(d, "class_table")],
        capacity_scale=float(_field(d, "capacity_scale")),
        n_beams=int(_field(d, "n_beams")),
    )


def save_model(path: str | Path, model: Model):
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str | Path) -> Model:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path}: not valid JSON ({exc})") from None
    return model_from_dict(d)


def write_history(path: str | Path, hist: History):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e, t, v in zip(hist.epochs, hist.train_loss, hist.val_loss):
            w.writerow([e, repr(t), repr(v)])
