"""Replay stored snapshots through a codec and compare classifier metrics.

Each snapshot ``x`` is reconstructed as ``x' = codec.reconstruct(x)``; both
are loaded into a fresh network of the collaborator architecture and
scored with a frozen evaluation pass (no updates).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import nn
from .codec import ModelShape, WeightDataset, unflatten
from .errors import CodecError


@dataclass
class ReplayRow:
    epoch: int
    orig_loss: float
    orig_acc: float
    pred_loss: float
    pred_acc: float


@dataclass
class ValidationReport:
    rows: list[ReplayRow]

    def __len__(self):
        return len(self.rows)

    def _deltas(self, a, b):
        return np.array([abs(getattr(r, a) - getattr(r, b)) for r in self.rows])

    @property
    def summary(self) -> dict:
        dacc = self._deltas("orig_acc", "pred_acc")
        dloss = self._deltas("orig_loss", "pred_loss")
        return {
            "snapshots": len(self.rows),
            "max_abs_delta_acc": float(dacc.max()),
            "mean_abs_delta_acc": float(dacc.mean()),
            "max_abs_delta_loss": float(dloss.max()),
            "mean_abs_delta_loss": float(dloss.mean()),
            "eval_split": "train",
        }

    def passes(self, max_mean_delta_acc: float, max_delta_acc: float) -> bool:
        s = self.summary
        return s["mean_abs_delta_acc"] <= max_mean_delta_acc and s["max_abs_delta_acc"] <= max_delta_acc

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "orig_loss", "orig_acc", "pred_loss", "pred_acc"])
        for r in self.rows:
            w.writerow([r.epoch, repr(r.orig_loss), repr(r.orig_acc), repr(r.pred_loss), repr(r.pred_acc)])
        return out.getvalue()


def replay_validation(ds: WeightDataset, codec, shape: ModelShape, eval_data) -> ValidationReport:
    """``codec`` is anything with ``reconstruct(weights)`` (an autoencoder or
    :class:`~aefl.autoencoder.IdentityCodec`); ``eval_data`` is a labeled
    dataset. Nothing is trained or mutated."""
    if ds.n_params != shape.total_params:
        raise CodecError(
            f"dataset has {ds.n_params} parameters, shape has {shape.total_params}",
            expected=shape.total_params,
            actual=ds.n_params,
        )
    inputs, targets = eval_data.inputs, eval_data.targets
    rows = []
    for epoch, x in enumerate(ds.snapshots):
        orig = nn.evaluate(unflatten(shape, x), inputs, targets)
        pred = nn.evaluate(unflatten(shape, codec.reconstruct(x)), inputs, targets)
        rows.append(ReplayRow(epoch, orig[0], orig[1], pred[0], pred[1]))
    return ValidationReport(rows)
