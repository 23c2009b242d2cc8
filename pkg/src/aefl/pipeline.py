"""File-backed experiment stages shared by the CLI and the scripts.

Layout under the output directory::

    data/collab_<i>.fwda
    prepass/collab_<i>.fwds        weight snapshots + stats
    prepass/collab_<i>.decoder     shipped to the aggregator
    prepass/collab_<i>.ae          kept by the collaborator (encoder side)
    prepass/ae_history.csv
    federated/rounds.csv, federated/summary.json
    validation/collab_<i>.csv, validation/summary.json
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from . import formats
from .autoencoder import IdentityCodec
from .codec import ModelShape, flatten
from .config import ExperimentConfig
from .data import Layout, LabeledDataset, gen_blobs, load_idx, partition, rgb_layout, to_grayscale
from .errors import ProtocolError
from .fl import (
    AggregatorState,
    CollaboratorState,
    derive_seed,
    rounds_csv,
    run_federated,
    run_prepass,
    summarize,
)
from .validation import replay_validation

# stream tags for fanning the single config seed out
DATA_STREAM = 1
PARTITION_STREAM = 2
INIT_STREAM = 3


def _path(out, *parts) -> Path:
    return Path(out).joinpath(*parts)


def data_path(out, i: int) -> Path:
    return _path(out, "data", f"collab_{i}.fwda")


def prepass_path(out, i: int, suffix: str) -> Path:
    return _path(out, "prepass", f"collab_{i}.{suffix}")


def build_partitions(cfg: ExperimentConfig) -> list[LabeledDataset]:
    d = cfg.data
    if d.idx is not None:
        full = load_idx(d.idx["images"], d.idx["labels"])
    else:
        layout = rgb_layout(d.height, d.width) if d.channels == 3 else Layout("gray", d.height, d.width)
        full = gen_blobs(d.n, d.dim, d.classes, d.spread, derive_seed(cfg.seed, DATA_STREAM), layout)
    parts = partition(full, cfg.federated.collaborators, derive_seed(cfg.seed, PARTITION_STREAM))
    return [to_grayscale(p) if i in d.grayscale else p for i, p in enumerate(parts)]


def model_shape(cfg: ExperimentConfig, in_dim: int, n_classes: int) -> ModelShape:
    hidden = list(cfg.model.hidden)
    acts = [cfg.model.hidden_activation] * len(hidden) + ["softmax"]
    return ModelShape.from_sizes([in_dim, *hidden, n_classes], acts)


def gen_data(cfg: ExperimentConfig, out) -> list[Path]:
    paths = []
    for i, part in enumerate(build_partitions(cfg)):
        path = data_path(out, i)
        formats.write(path, formats.labeled_bytes(part))
        paths.append(path)
    return paths


def load_data(cfg: ExperimentConfig, out) -> list[LabeledDataset]:
    return [
        formats.labeled_from_bytes(formats.read(data_path(out, i)))
        for i in range(cfg.federated.collaborators)
    ]


def setup(cfg: ExperimentConfig, parts):
    shape = model_shape(cfg, parts[0].inputs.shape[1], parts[0].n_classes)
    init = flatten(shape.build(derive_seed(cfg.seed, INIT_STREAM)))
    train = cfg.classifier_train()
    collabs = [CollaboratorState(i, shape.build(0), p, train) for i, p in enumerate(parts)]
    return collabs, AggregatorState(init, shape)


def ae_history_csv(histories) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["collab_id", "epoch", "loss", "recreation_accuracy", "holdout_loss", "holdout_accuracy"])
    for cid, h in sorted(histories.items()):
        for e, (l, a) in enumerate(zip(h.loss, h.recreation_accuracy)):
            hl = repr(h.holdout_loss[e]) if h.holdout_loss else ""
            ha = repr(h.holdout_accuracy[e]) if h.holdout_accuracy else ""
            w.writerow([cid, e, repr(l), repr(a), hl, ha])
    return out.getvalue()


def prepass(cfg: ExperimentConfig, out):
    collabs, agg = setup(cfg, load_data(cfg, out))
    histories = run_prepass(
        collabs, agg, cfg.prepass.epochs, cfg.ae_config(), cfg.seed, cfg.prepass.snapshot_interval
    )
    for c in collabs:
        formats.write(prepass_path(out, c.id, "fwds"), formats.dataset_bytes(c.weights))
        formats.write(prepass_path(out, c.id, "decoder"), formats.decoder_bytes(agg.decoders[c.id]))
        formats.write(prepass_path(out, c.id, "ae"), formats.autoencoder_bytes(c.codec))
    formats.write(_path(out, "prepass", "ae_history.csv"), ae_history_csv(histories).encode())
    return collabs, agg, histories


def federate(cfg: ExperimentConfig, out, threads: int = 1):
    collabs, agg = setup(cfg, load_data(cfg, out))
    if cfg.compression:
        for c in collabs:
            dec_path = prepass_path(out, c.id, "decoder")
            if not dec_path.exists():
                raise ProtocolError(f"no decoder registered for collaborator {c.id} ({dec_path})")
            agg.decoders[c.id] = formats.decoder_from_bytes(formats.read(dec_path))
            c.codec = formats.autoencoder_from_bytes(formats.read(prepass_path(out, c.id, "ae")))
            c.codec.config = cfg.ae_config()
            if cfg.federated.retrain_every:
                c.weights = formats.dataset_from_bytes(formats.read(prepass_path(out, c.id, "fwds")))
    records = run_federated(
        collabs,
        agg,
        cfg.federated.rounds,
        cfg.federated.local_epochs,
        compression=cfg.compression,
        threads=threads,
        retrain_every=cfg.federated.retrain_every,
        ae_cfg=cfg.ae_config(),
    )
    p = agg.shape.total_params
    latent = {c.id: (c.codec.latent_dim if cfg.compression else p) for c in collabs}
    summary = summarize(records, p, latent)
    summary["compression"] = cfg.federated.compression
    formats.write(_path(out, "federated", "rounds.csv"), rounds_csv(records).encode())
    formats.write(_path(out, "federated", "summary.json"), json.dumps(summary, indent=2).encode())
    return records, summary


def validate(cfg: ExperimentConfig, out, identity: bool = False):
    parts = load_data(cfg, out)
    shape = model_shape(cfg, parts[0].inputs.shape[1], parts[0].n_classes)
    v = cfg.validation
    results = {}
    all_ok = True
    for i, part in enumerate(parts):
        ds = formats.dataset_from_bytes(formats.read(prepass_path(out, i, "fwds")))
        if identity:
            codec = IdentityCodec(shape.total_params)
        else:
            codec = formats.autoencoder_from_bytes(formats.read(prepass_path(out, i, "ae")))
        report = replay_validation(ds, codec, shape, part)
        s = report.summary
        ok = report.passes(v.max_mean_delta_acc, v.max_delta_acc)
        if v.max_mean_delta_loss is not None:
            ok = ok and s["mean_abs_delta_loss"] <= v.max_mean_delta_loss
        if v.max_delta_loss is not None:
            ok = ok and s["max_abs_delta_loss"] <= v.max_delta_loss
        s["passed"] = ok
        all_ok = all_ok and ok
        results[str(i)] = s
        formats.write(_path(out, "validation", f"collab_{i}.csv"), report.to_csv().encode())
    summary = {"codec": "identity" if identity else "autoencoder", "passed": all_ok,
               "collaborators": results}
    formats.write(_path(out, "validation", "summary.json"), json.dumps(summary, indent=2).encode())
    return summary
