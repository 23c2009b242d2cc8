"""Flattening, snapshot capture and min-max scaling of model weights.

Flat layout (part of the wire contract): for each layer in order, the
weight matrix row-major ``(out, in)`` followed by the bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CodecError
from .nn import DenseLayer, Network

PER_EPOCH = "per_epoch"


@dataclass(frozen=True)
class ModelShape:
    layers: tuple[tuple[int, int, str], ...]  # (in, out, activation)

    @classmethod
    def of(cls, net: Network) -> "ModelShape":
        return cls(tuple((l.in_dim, l.out_dim, l.activation) for l in net.layers))

    @classmethod
    def from_sizes(cls, sizes, activations) -> "ModelShape":
        return cls(tuple(zip(sizes[:-1], sizes[1:], activations)))

    @property
    def total_params(self) -> int:
        return sum(i * o + o for i, o, _ in self.layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0]] + [o for _, o, _ in self.layers]

    @property
    def activations(self) -> list[str]:
        return [a for _, _, a in self.layers]

    def build(self, seed: int = 0) -> Network:
        return Network.build(self.sizes, self.activations, seed)


def flatten(net: Network) -> np.ndarray:
    parts = []
    for layer in net.layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts).astype(np.float32, copy=False)


def unflatten(shape: ModelShape, flat, net: Optional[Network] = None) -> Network:
    """Write ``flat`` into ``net`` (overwriting in place) or into a fresh network."""
    flat = np.asarray(flat)
    if flat.ndim != 1 or flat.size != shape.total_params:
        raise CodecError(
            f"expected {shape.total_params} values, got {flat.size}",
            expected=shape.total_params,
            actual=flat.size,
        )
    if net is not None and ModelShape.of(net) != shape:
        raise CodecError("network does not conform to the model shape")
    dtype = net.dtype if net is not None else np.float32
    layers = []
    pos = 0
    for i_dim, o_dim, act in shape.layers:
        w = flat[pos : pos + i_dim * o_dim].reshape(o_dim, i_dim).astype(dtype)
        pos += i_dim * o_dim
        b = flat[pos : pos + o_dim].astype(dtype)
        pos += o_dim
        layers.append(DenseLayer(w, b, act))
    if net is None:
        return Network(layers)
    for dst, src in zip(net.layers, layers):
        dst.weights[...] = src.weights
        dst.bias[...] = src.bias
    return net


@dataclass
class NormStats:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float32)
        self.max = np.asarray(self.max, dtype=np.float32)
        if self.min.shape != self.max.shape:
            raise CodecError("min and max vectors differ in length")
        if np.any(self.min > self.max):
            raise ValueError("min exceeds max")

    @property
    def degenerate(self) -> np.ndarray:
        return self.min == self.max

    def __len__(self):
        return self.min.size


@dataclass
class WeightDataset:
    """Stacked weight snapshots ``(S, P)`` taken during local training.

    ``snapshot_interval`` is ``"per_epoch"`` or ``"per_n_batches:<n>"``.
    """

    n_params: int
    shape: Optional[ModelShape] = None
    snapshot_interval: str = PER_EPOCH
    stats: Optional[NormStats] = None
    _rows: list = field(default_factory=list, repr=False)

    @classmethod
    def from_array(cls, snapshots, **kwargs) -> "WeightDataset":
        snapshots = np.asarray(snapshots, dtype=np.float32)
        ds = cls(snapshots.shape[1], **kwargs)
        ds._rows = [row.copy() for row in snapshots]
        return ds

    @property
    def snapshots(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.n_params), dtype=np.float32)
        return np.stack(self._rows)

    def __len__(self):
        return len(self._rows)

    @property
    def batch_interval(self) -> Optional[int]:
        if self.snapshot_interval == PER_EPOCH:
            return None
        return int(self.snapshot_interval.split(":")[1])


def append_snapshot(ds: WeightDataset, net: Network) -> WeightDataset:
    if ds.shape is not None and ModelShape.of(net) != ds.shape:
        raise CodecError("network does not match the dataset's model shape")
    row = flatten(net)
    if row.size != ds.n_params:
        raise CodecError(
            f"snapshot has {row.size} values, dataset expects {ds.n_params}",
            expected=ds.n_params,
            actual=row.size,
        )
    ds._rows.append(row.copy())
    return ds


def snapshot_hooks(ds: WeightDataset, net: Network):
    """``(snapshot_hook, batch_hook)`` for :func:`aefl.nn.train` honoring the dataset cadence."""
    every = ds.batch_interval
    if every is None:
        return (lambda epoch: append_snapshot(ds, net)), None
    counter = [0]

    def on_batch(epoch, b):
        counter[0] += 1
        if counter[0] % every == 0:
            append_snapshot(ds, net)

    return None, on_batch


def fit_norm(ds) -> NormStats:
    snaps = ds.snapshots if isinstance(ds, WeightDataset) else np.asarray(ds, dtype=np.float32)
    if snaps.shape[0] == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    return NormStats(snaps.min(axis=0), snaps.max(axis=0))


def _check_len(x, stats):
    if x.shape[-1] != len(stats):
        raise CodecError(
            f"vector length {x.shape[-1]} does not match stats length {len(stats)}",
            expected=len(stats),
            actual=x.shape[-1],
        )


def normalize(flat, stats: NormStats) -> np.ndarray:
    """Per-parameter min-max to [0, 1], clamped; constant parameters map to 0.5.

    Works on a single vector or a ``(S, P)`` stack.
    """
    x = np.asarray(flat, dtype=np.float64)
    _check_len(x, stats)
    lo = stats.min.astype(np.float64)
    span = stats.max.astype(np.float64) - lo
    degenerate = span == 0
    y = (x - lo) / np.where(degenerate, 1.0, span)
    y = np.clip(y, 0.0, 1.0)
    y = np.where(degenerate, 0.5, y)
    return y.astype(np.float32)


def denormalize(flat, stats: NormStats) -> np.ndarray:
    y = np.asarray(flat, dtype=np.float64)
    _check_len(y, stats)
    lo = stats.min.astype(np.float64)
    span = stats.max.astype(np.float64) - lo
    x = lo + y * span
    return np.where(stats.degenerate, stats.min, x).astype(np.float32)
