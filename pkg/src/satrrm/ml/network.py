"""Small fully connected network with a softmax or linear head, in numpy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass
class Network:
    layer_dims: list[int]
    head: str
    weights: list[np.ndarray]  # weights[i] has shape (layer_dims[i], layer_dims[i + 1])
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.head not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown head {self.head!r}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} parameter shapes do not match layer_dims")

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Network":
        return Network(
            list(self.layer_dims),
            self.head,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def init_network(n_in: int, hidden: list[int], n_out: int, head: str, seed: int = 0) -> Network:
    """He-initialized weights for ReLU layers, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [n_in, *hidden, n_out]
    weights, biases = [], []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        gain = 2.0 if i < len(dims) - 2 else 1.0
        weights.append(rng.normal(0.0, np.sqrt(gain / a), size=(a, b)))
        biases.append(np.zeros(b))
    return Network(dims, head, weights, biases)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Cache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activation of each layer
    output: np.ndarray | None = None


def forward(net: Network, x: np.ndarray, cache: Cache | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.layer_dims[0]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {net.layer_dims[0]}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if cache is not None:
            cache.inputs.append(h)
            cache.pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    out = softmax(h) if net.head == CLASSIFICATION else h
    if cache is not None:
        cache.output = out
    return out


def backward(net: Network, cache: Cache, grad_out: np.ndarray, logits: bool = False) -> list[np.ndarray]:
    """Gradients of a scalar loss wrt every weight and bias.

    ``grad_out`` is dL/d(output). For the classification head pass
    ``logits=True`` to supply dL/d(logits) directly, skipping the softmax
    Jacobian. Returns gradients in the order of ``Network.params``.
    """
    g = np.asarray(grad_out, dtype=float)
    if net.head == CLASSIFICATION and not logits:
        p = cache.output
        g = p * (g - (g * p).sum(axis=-1, keepdims=True))
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        h = cache.inputs[i]
        if h.ndim == 1:
            gw = np.outer(h, g)
            gb = g.copy()
        else:
            gw = h.T @ g
            gb = g.sum(axis=0)
        grads[:0] = [gw, gb]
        if i > 0:
            g = (g @ net.weights[i].T) * (cache.pre[i - 1] > 0)
    return grads


def loss_classification(probs: np.ndarray, class_id) -> float:
    """Mean cross-entropy of the true class."""
    probs = np.atleast_2d(probs)
    class_id = np.atleast_1d(np.asarray(class_id))
    L = probs.shape[1]
    if np.any(class_id < 0) or np.any(class_id >= L):
        raise ValueError(f"class id out of range 0..{L - 1}")
    picked = probs[np.arange(len(class_id)), class_id]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def grad_classification(probs: np.ndarray, class_id) -> np.ndarray:
    """dL/d(logits) of mean cross-entropy after softmax."""
    probs = np.atleast_2d(probs)
    class_id = np.atleast_1d(np.asarray(class_id))
    g = probs.copy()
    g[np.arange(len(class_id)), class_id] -= 1.0
    return g / len(class_id)


def loss_regression(pred, target, demand, penalty: float = 1.0) -> float:
    """MSE to the label plus a squared hinge pushing predictions above demand.

    All quantities are capacities normalized by the max capacity; demand above
    1 is clipped to 1 since no option can exceed it.
    """
    pred, target, demand = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (pred, target, demand))
    B = pred.shape[1]
    short = np.maximum(np.minimum(demand, 1.0) - pred, 0.0)
    per_sample = ((pred - target) ** 2).sum(axis=1) / B + penalty * (short**2).sum(axis=1) / B
    return float(per_sample.mean())


def grad_regression(pred, target, demand, penalty: float = 1.0) -> np.ndarray:
    pred, target, demand = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (pred, target, demand))
    n, B = pred.shape
    short = np.maximum(np.minimum(demand, 1.0) - pred, 0.0)
    return (2.0 * (pred - target) - 2.0 * penalty * short) / (B * n)
