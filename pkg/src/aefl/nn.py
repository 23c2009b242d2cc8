"""Small dense network engine: forward pass, backprop and plain SGD.

Everything runs in float32 unless a network is explicitly cast with
:meth:`Network.astype` (the gradient checks do this to keep finite
differences meaningful).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NumericError

ACTIVATIONS = ("identity", "sigmoid", "tanh", "relu", "softmax")
LOSSES = ("mse", "cross_entropy")
STEP_SCALES = ("uniform", "fan_in")

# keeps log() finite for cross entropy on saturated softmax outputs
_PROB_FLOOR = 1e-12


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class Network:
    layers: list[DenseLayer]
    rng_seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("network needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer {i} outputs {a.out_dim} but layer {i + 1} expects {b.in_dim}"
                )
        for i, layer in enumerate(self.layers[:-1]):
            if layer.activation == "softmax":
                raise ValueError(f"softmax is only allowed on the last layer (layer {i})")

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str],
        seed: int = 0,
        dtype=np.float32,
    ) -> "Network":
        """Glorot-uniform weights, zero biases. ``sizes`` includes the input width."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        if any(s < 1 for s in sizes):
            raise DimensionError(f"layer sizes must be positive, got {list(sizes)}")
        rng = np.random.default_rng(seed)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in)).astype(dtype)
            layers.append(DenseLayer(w, np.zeros(n_out, dtype=dtype), act))
        return cls(layers, rng_seed=seed)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Network":
        layers = [
            DenseLayer(l.weights.astype(dtype), l.bias.astype(dtype), l.activation)
            for l in self.layers
        ]
        return Network(layers, self.rng_seed)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 1
    loss: str = "cross_entropy"
    shuffle_seed: int = 0
    # "fan_in" divides the step of each layer by its input width
    step_scale: str = "uniform"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.step_scale not in STEP_SCALES:
            raise ValueError(f"unknown step_scale {self.step_scale!r}")


@dataclass
class TrainingHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)


def param_count(net: Network) -> int:
    return sum(layer.param_count for layer in net.layers)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "sigmoid":
        # tanh form never overflows
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activation_backward(kind: str, a: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Map dL/da to dL/dz given the layer output ``a``."""
    if kind == "identity":
        return grad
    if kind == "sigmoid":
        return grad * a * (1 - a)
    if kind == "tanh":
        return grad * (1 - a * a)
    if kind == "relu":
        return grad * (a > 0)
    return a * (grad - np.sum(grad * a, axis=1, keepdims=True))


def _check_input(net: Network, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=net.dtype)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != net.in_dim:
        raise DimensionError(
            f"layer 0 expects {net.in_dim} input columns, got batch of shape {batch.shape}"
        )
    return batch


def _forward_all(net: Network, batch: np.ndarray) -> list[np.ndarray]:
    acts = [batch]
    for layer in net.layers:
        z = acts[-1] @ layer.weights.T + layer.bias
        acts.append(_activate(layer.activation, z))
    return acts


def forward(net: Network, batch) -> np.ndarray:
    """Final-layer activations for a ``(B, in)`` batch (a 1-D row is promoted)."""
    return _forward_all(net, _check_input(net, batch))[-1]


def loss(pred, target, kind: str = "mse") -> float:
    """``mse`` is the batch mean of the squared L2 residual norm (not the per-element mean)."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[None, :], target[None, :]
    if kind == "mse":
        diff = pred - target
        return float(np.mean(np.sum(diff * diff, axis=1)))
    if kind == "cross_entropy":
        if np.any(pred < 0):
            raise ValueError("cross_entropy needs probability rows")
        logp = np.log(np.maximum(pred, _PROB_FLOOR))
        return float(-np.mean(np.sum(target * logp, axis=1)))
    raise ValueError(f"unknown loss {kind!r}")


def _output_delta(kind: str, activation: str, pred, target) -> np.ndarray:
    n = pred.shape[0]
    if kind == "cross_entropy" and activation == "softmax":
        return (pred - target) / n
    if kind == "mse":
        grad = 2.0 * (pred - target) / n
    else:
        grad = -target / np.maximum(pred, _PROB_FLOOR) / n
    return _activation_backward(activation, pred, grad)


def _backprop(net, batch, targets, kind):
    batch = _check_input(net, batch)
    targets = np.asarray(targets, dtype=net.dtype)
    if targets.ndim == 1:
        targets = targets[None, :]
    acts = _forward_all(net, batch)
    pred = acts[-1]
    value = loss(pred, targets, kind)
    delta = _output_delta(kind, net.layers[-1].activation, pred, targets)
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        gw = delta.T @ acts[i]
        gb = delta.sum(axis=0)
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient in layer {i}", layer=i)
        grads[i] = (gw, gb)
        if i > 0:
            delta = _activation_backward(
                net.layers[i - 1].activation, acts[i], delta @ layer.weights
            )
    return value, pred, grads


def gradients(net: Network, batch, targets, kind: str = "mse"):
    """Per-layer ``(dL/dW, dL/db)`` pairs without touching the network."""
    return _backprop(net, batch, targets, kind)[2]


def _step(net, batch, targets, cfg):
    value, pred, grads = _backprop(net, batch, targets, cfg.loss)
    if cfg.learning_rate != 0:
        for layer, (gw, gb) in zip(net.layers, grads):
            lr = cfg.learning_rate
            if cfg.step_scale == "fan_in":
                lr /= layer.in_dim
            lr = net.dtype.type(lr)
            layer.weights -= lr * gw
            layer.bias -= lr * gb
    return value, pred


def train_step(net: Network, batch, targets, cfg: TrainConfig) -> float:
    """One SGD update; returns the loss measured before the update."""
    return _step(net, batch, targets, cfg)[0]


def _n_correct(pred, targets) -> int:
    return int(np.sum(np.argmax(pred, axis=1) == np.argmax(targets, axis=1)))


def train(
    net: Network,
    inputs,
    targets,
    cfg: TrainConfig,
    snapshot_hook: Optional[Callable[[int], None]] = None,
    batch_hook: Optional[Callable[[int, int], None]] = None,
) -> TrainingHistory:
    """Minibatch SGD for ``cfg.epochs`` epochs.

    Rows are reshuffled every epoch from ``(cfg.shuffle_seed, epoch)``.
    The recorded loss is the size-weighted mean of pre-update batch losses
    and accuracy is measured on those same pre-update predictions.
    ``snapshot_hook(epoch)`` fires after the last batch of every epoch;
    ``batch_hook(epoch, batch_index)`` after every batch.
    """
    inputs = _check_input(net, inputs)
    targets = np.asarray(targets, dtype=net.dtype)
    n = inputs.shape[0]
    if targets.shape[0] != n:
        raise DimensionError(f"{n} input rows but {targets.shape[0]} target rows")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")

    history = TrainingHistory()
    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.shuffle_seed, epoch)).permutation(n)
        total, correct = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            value, pred = _step(net, inputs[idx], targets[idx], cfg)
            total += value * len(idx)
            correct += _n_correct(pred, targets[idx])
            if batch_hook is not None:
                batch_hook(epoch, b)
        history.loss.append(total / n)
        history.accuracy.append(correct / n)
        if snapshot_hook is not None:
            snapshot_hook(epoch)
    return history


def default_loss(net: Network) -> str:
    return "cross_entropy" if net.layers[-1].activation == "softmax" else "mse"


def evaluate(net: Network, inputs, targets, kind: Optional[str] = None) -> tuple[float, float]:
    """Frozen metrics pass: ``(loss, accuracy)`` with no parameter updates.

    Accuracy compares argmax rows; ties resolve to the lowest index.
    """
    inputs = _check_input(net, inputs)
    targets = np.asarray(targets, dtype=net.dtype)
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if targets.shape[0] != inputs.shape[0]:
        raise DimensionError(f"{inputs.shape[0]} input rows but {targets.shape[0]} target rows")
    pred = forward(net, inputs)
    value = loss(pred, targets, kind or default_loss(net))
    return value, _n_correct(pred, targets) / inputs.shape[0]
