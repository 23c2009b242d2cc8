"""In-process federated learning with autoencoder-compressed uplink.

Protocol:

1. pre-pass: every collaborator trains the initial global model locally
   (no aggregation), snapshotting its weights each epoch; it then trains an
   autoencoder on those snapshots and ships the decoder half to the
   aggregator.
2. rounds: collaborators load the global weights, train locally, send the
   encoded weights; the aggregator decodes, averages and broadcasts.

All messages cross the collaborator/aggregator boundary as bytes.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import formats, nn
from .autoencoder import (
    AEConfig,
    AEHistory,
    Decoder,
    IdentityCodec,
    LatentCode,
    SymmetricAutoencoder,
    build_ae,
    train_ae,
)
from .codec import ModelShape, WeightDataset, fit_norm, flatten, snapshot_hooks, unflatten
from .data import LabeledDataset
from .errors import CodecError, NumericError, PrepassError, ProtocolError
from .nn import Network, TrainConfig

Codec = Union[SymmetricAutoencoder, IdentityCodec]
ServerCodec = Union[Decoder, IdentityCodec]

BYTES_PER_FLOAT = 4


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed fanned out from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class CollaboratorState:
    id: int
    model: Network
    data: LabeledDataset
    train: TrainConfig
    codec: Optional[Codec] = None
    weights: Optional[WeightDataset] = None
    ae_history: Optional[AEHistory] = None
    history: list = field(default_factory=list)

    @property
    def shape(self) -> ModelShape:
        return ModelShape.of(self.model)


@dataclass
class AggregatorState:
    global_weights: np.ndarray
    shape: ModelShape
    decoders: dict[int, ServerCodec] = field(default_factory=dict)
    round: int = 0
    decoder_shipment_bytes: dict[int, int] = field(default_factory=dict)


@dataclass
class CompressedUpdate:
    collaborator_id: int
    round: int
    latent: LatentCode

    def to_bytes(self) -> bytes:
        return formats.update_bytes(self.collaborator_id, self.round, self.latent.values)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedUpdate":
        cid, rnd, values = formats.update_from_bytes(buf)
        return cls(cid, rnd, LatentCode(values, rnd, cid))

    @property
    def payload_bytes(self) -> int:
        return BYTES_PER_FLOAT * len(self.latent)

    @property
    def wire_bytes(self) -> int:
        return formats.UPDATE_HEADER_BYTES + self.payload_bytes


@dataclass
class CollabRound:
    collaborator_id: int
    pre_loss: float
    pre_accuracy: float
    post_loss: float
    post_accuracy: float
    uplink_bytes: int
    downlink_bytes: int


@dataclass
class RoundRecord:
    """One communication round.

    Byte counts are payload only (4 bytes per transmitted float). The
    FWUP framing overhead is tracked separately in ``uplink_wire_bytes``.
    """

    round: int
    collaborators: list[CollabRound]
    uplink_bytes: int
    downlink_bytes: int
    uplink_wire_bytes: int


def make_collaborators(
    datasets: Sequence[LabeledDataset], shape: ModelShape, train: TrainConfig
) -> list[CollaboratorState]:
    return [
        CollaboratorState(i, shape.build(0), ds, train) for i, ds in enumerate(datasets)
    ]


def _local_config(c: CollaboratorState, epochs: int, salt: int) -> TrainConfig:
    t = c.train
    return TrainConfig(
        t.learning_rate,
        min(t.batch_size, len(c.data)),
        epochs,
        t.loss,
        derive_seed(t.shuffle_seed, c.id, salt),
    )


def run_prepass(
    collabs: Sequence[CollaboratorState],
    agg: AggregatorState,
    prepass_epochs: int,
    ae_cfg: AEConfig,
    seed: int = 0,
    snapshot_interval: str = "per_epoch",
) -> dict[int, AEHistory]:
    """Local-only training, snapshot capture, AE training and decoder shipment.

    Mutates the collaborator and aggregator states in place and returns the
    AE training history per collaborator.
    """
    if prepass_epochs < 2:
        raise ValueError("pre-pass needs at least 2 epochs to collect 2 snapshots")
    histories = {}
    for c in collabs:
        if c.shape != agg.shape:
            raise ProtocolError(f"collaborator {c.id} does not share the global architecture")
        unflatten(agg.shape, agg.global_weights, c.model)
        ds = WeightDataset(agg.shape.total_params, agg.shape, snapshot_interval)
        on_epoch, on_batch = snapshot_hooks(ds, c.model)
        # salt -1 keeps pre-pass shuffles apart from round 0
        cfg = _local_config(c, prepass_epochs, -1 & 0xFFFFFFFF)
        nn.train(c.model, c.data.inputs, c.data.targets, cfg, on_epoch, on_batch)
        ds.stats = fit_norm(ds)
        ae = build_ae(ds.n_params, ae_cfg, derive_seed(seed, c.id), ds.stats, agg.shape)
        try:
            hist = train_ae(ae, ds, ae_cfg)
        except NumericError as exc:
            raise PrepassError(
                f"autoencoder training diverged for collaborator {c.id}: {exc}", c.id
            ) from exc
        if not np.all(np.isfinite(hist.loss)):
            raise PrepassError(f"autoencoder loss is not finite for collaborator {c.id}", c.id)
        c.weights, c.codec, c.ae_history = ds, ae, hist
        ship_decoder(c, agg)
        histories[c.id] = hist
    return histories


def ship_decoder(c: CollaboratorState, agg: AggregatorState) -> None:
    payload = formats.decoder_bytes(c.codec.decoder_bundle())
    agg.decoders[c.id] = formats.decoder_from_bytes(payload)
    agg.decoder_shipment_bytes[c.id] = len(payload)


def install_identity_codecs(collabs: Sequence[CollaboratorState], agg: AggregatorState) -> None:
    p = agg.shape.total_params
    for c in collabs:
        c.codec = IdentityCodec(p)
        agg.decoders[c.id] = IdentityCodec(p)


def local_round(c: CollaboratorState, global_weights, local_epochs: int, round: int = 0) -> np.ndarray:
    """Load the global weights, train locally, return the flattened result."""
    unflatten(c.shape, global_weights, c.model)
    if local_epochs > 0:
        cfg = _local_config(c, local_epochs, round)
        nn.train(c.model, c.data.inputs, c.data.targets, cfg)
    return flatten(c.model)


def compress_uplink(c: CollaboratorState, w, round: int) -> CompressedUpdate:
    if c.codec is None:
        raise ProtocolError(f"collaborator {c.id} has no codec; run the pre-pass first")
    w = np.asarray(w)
    if w.size != c.codec.n_params:
        raise CodecError(
            f"expected {c.codec.n_params} weights, got {w.size}",
            expected=c.codec.n_params,
            actual=w.size,
        )
    z = c.codec.compress(w)
    return CompressedUpdate(c.id, round, LatentCode(z, round, c.id))


def aggregate(
    agg: AggregatorState,
    updates: Sequence[CompressedUpdate],
    decoders: Optional[dict[int, ServerCodec]] = None,
) -> np.ndarray:
    """Decode every update and average the reconstructions (ascending id order)."""
    decoders = agg.decoders if decoders is None else decoders
    ids = [u.collaborator_id for u in updates]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate collaborator in updates: {sorted(ids)}")
    if set(ids) != set(decoders):
        missing = sorted(set(decoders) - set(ids))
        extra = sorted(set(ids) - set(decoders))
        raise ProtocolError(f"update set mismatch: missing {missing}, unregistered {extra}")
    for u in updates:
        if u.round != agg.round:
            raise ProtocolError(
                f"update from {u.collaborator_id} stamped round {u.round}, expected {agg.round}"
            )
    recon = []
    for u in sorted(updates, key=lambda u: u.collaborator_id):
        dec = decoders[u.collaborator_id]
        if len(u.latent) != dec.latent_dim:
            raise CodecError(
                f"collaborator {u.collaborator_id} sent {len(u.latent)} values, "
                f"decoder expects {dec.latent_dim}",
                expected=dec.latent_dim,
                actual=len(u.latent),
            )
        recon.append(dec.expand(u.latent))
    new = np.mean(np.stack(recon).astype(np.float64), axis=0).astype(np.float32)
    agg.global_weights = new
    agg.round += 1
    return new


def _refresh_codec(c: CollaboratorState, agg: AggregatorState, w, ae_cfg: AEConfig) -> None:
    c.weights._rows.append(np.asarray(w, dtype=np.float32).copy())
    c.weights.stats = fit_norm(c.weights)
    c.codec.stats = c.weights.stats
    train_ae(c.codec, c.weights, ae_cfg)
    ship_decoder(c, agg)


def run_federated(
    collabs: Sequence[CollaboratorState],
    agg: AggregatorState,
    rounds: int,
    local_epochs: int,
    compression: bool = True,
    threads: int = 1,
    retrain_every: int = 0,
    ae_cfg: Optional[AEConfig] = None,
) -> list[RoundRecord]:
    """Run ``rounds`` communication rounds with full participation.

    ``compression=False`` sends raw weights (plain FedAvg). Pre-aggregation
    metrics are taken after local training, post-aggregation metrics after
    the new global is loaded, both on the collaborator's local data.
    ``retrain_every=k`` refreshes each autoencoder with the latest local
    weights every ``k`` rounds.
    """
    collabs = sorted(collabs, key=lambda c: c.id)
    p = agg.shape.total_params
    if compression:
        for c in collabs:
            if c.codec is None or c.id not in agg.decoders:
                raise ProtocolError(f"no codec registered for collaborator {c.id}")
        decoders = agg.decoders
        codecs = {c.id: c.codec for c in collabs}
    else:
        decoders = {c.id: IdentityCodec(p) for c in collabs}
        codecs = dict(decoders)

    records = []
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for _ in range(rounds):
            r = agg.round
            g = agg.global_weights.copy()

            def work(c):
                w = local_round(c, g, local_epochs, r)
                pre = nn.evaluate(c.model, c.data.inputs, c.data.targets)
                if compression and retrain_every and r > 0 and r % retrain_every == 0:
                    _refresh_codec(c, agg, w, ae_cfg or c.codec.config)
                z = codecs[c.id].compress(w)
                return pre, CompressedUpdate(c.id, r, LatentCode(z, r, c.id)).to_bytes()

            results = list(pool.map(work, collabs)) if pool else [work(c) for c in collabs]
            updates = [CompressedUpdate.from_bytes(msg) for _, msg in results]
            new = aggregate(agg, updates, decoders)

            entries = []
            for c, (pre, _), u in zip(collabs, results, updates):
                unflatten(agg.shape, new, c.model)
                post = nn.evaluate(c.model, c.data.inputs, c.data.targets)
                entries.append(
                    CollabRound(c.id, pre[0], pre[1], post[0], post[1],
                                u.payload_bytes, BYTES_PER_FLOAT * p)
                )
                c.history.append(entries[-1])
            records.append(
                RoundRecord(
                    r,
                    entries,
                    sum(e.uplink_bytes for e in entries),
                    sum(e.downlink_bytes for e in entries),
                    sum(u.wire_bytes for u in updates),
                )
            )
    finally:
        if pool:
            pool.shutdown()
    return records


ROUND_COLUMNS = ("round", "collab_id", "phase", "loss", "accuracy", "uplink_bytes", "downlink_bytes")


def rounds_csv(records: Sequence[RoundRecord]) -> str:
    """Per-round metrics, two rows per collaborator.

    Uplink bytes sit on the ``pre`` row (sent after local training) and
    downlink bytes on the ``post`` row, so column sums give totals.
    """
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ROUND_COLUMNS)
    for rec in records:
        for e in rec.collaborators:
            w.writerow([rec.round, e.collaborator_id, "pre", repr(e.pre_loss), repr(e.pre_accuracy),
                        e.uplink_bytes, 0])
            w.writerow([rec.round, e.collaborator_id, "post", repr(e.post_loss), repr(e.post_accuracy),
                        0, e.downlink_bytes])
    return out.getvalue()


def summarize(records: Sequence[RoundRecord], n_params: int, latent_dims: dict[int, int]) -> dict:
    last = records[-1].collaborators if records else []
    uplink = sum(r.uplink_bytes for r in records)
    raw = BYTES_PER_FLOAT * n_params * sum(len(r.collaborators) for r in records)
    return {
        "rounds": len(records),
        "final_accuracy": {str(e.collaborator_id): e.post_accuracy for e in last},
        "final_pre_aggregation_accuracy": {str(e.collaborator_id): e.pre_accuracy for e in last},
        "final_loss": {str(e.collaborator_id): e.post_loss for e in last},
        "total_uplink_bytes": uplink,
        "total_uplink_wire_bytes": sum(r.uplink_wire_bytes for r in records),
        "total_downlink_bytes": sum(r.downlink_bytes for r in records),
        "uncompressed_uplink_bytes": raw,
        "achieved_compression_ratio": raw / uplink if uplink else None,
        "n_params": n_params,
        "latent_dims": {str(k): v for k, v in latent_dims.items()},
    }
