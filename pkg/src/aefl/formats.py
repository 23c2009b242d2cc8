"""Binary file and wire formats. All multi-byte values are little-endian
except IDX, which lives in :mod:`aefl.data`.

FWCK  checkpoint: "FWCK" u16 version, u16 n_layers, per layer (u32 in,
      u32 out, u8 activation), then per layer weights row-major + bias as f32.
FWDS  weight dataset: "FWDS" u16 version, u32 P, u32 S, u8 has_stats,
      [min P f32, max P f32], S*P f32 row-major.
FWUP  compressed update: "FWUP" u16 version, u32 collaborator, u32 round,
      u32 L, L f32.
FWDA  labeled data: "FWDA" u32 n, u32 d, u32 k, n*d f32, n u8 labels.
Decoder shipment: FWCK of the decoder layers, min/max stats (2*P f32),
      u32 latent dim.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .autoencoder import Decoder, SymmetricAutoencoder
from .codec import NormStats, WeightDataset
from .data import LabeledDataset, one_hot
from .errors import ParseError
from .nn import ACTIVATIONS, DenseLayer, Network

VERSION = 1
F32 = np.dtype("<f4")

CHECKPOINT_MAGIC = b"FWCK"
DATASET_MAGIC = b"FWDS"
UPDATE_MAGIC = b"FWUP"
DATA_MAGIC = b"FWDA"

UPDATE_HEADER_BYTES = 4 + 2 + 4 + 4 + 4


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError(f"{self.what}: truncated, needed {n} more bytes", offset=self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype=F32).astype(np.float32)

    def magic(self, expected: bytes):
        found = self.take(4)
        if found != expected:
            raise ParseError(f"{self.what}: bad magic {found!r}, expected {expected!r}", offset=0)

    def version(self):
        (v,) = self.unpack("<H")
        if v != VERSION:
            raise ParseError(f"{self.what}: unsupported version {v}", offset=self.pos - 2)


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype=F32).tobytes()


def checkpoint_bytes(net: Network) -> bytes:
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<HH", VERSION, len(net.layers)))
    for layer in net.layers:
        out.write(struct.pack("<IIB", layer.in_dim, layer.out_dim, ACTIVATIONS.index(layer.activation)))
    for layer in net.layers:
        out.write(_f32(layer.weights))
        out.write(_f32(layer.bias))
    return out.getvalue()


def _read_checkpoint(r: _Reader) -> Network:
    r.magic(CHECKPOINT_MAGIC)
    r.version()
    (n_layers,) = r.unpack("<H")
    headers = []
    for _ in range(n_layers):
        n_in, n_out, tag = r.unpack("<IIB")
        if tag >= len(ACTIVATIONS):
            raise ParseError(f"{r.what}: unknown activation tag {tag}", offset=r.pos - 1)
        headers.append((n_in, n_out, ACTIVATIONS[tag]))
    layers = []
    for n_in, n_out, act in headers:
        w = r.floats(n_in * n_out).reshape(n_out, n_in)
        b = r.floats(n_out)
        layers.append(DenseLayer(w, b, act))
    return Network(layers)


def checkpoint_from_bytes(buf: bytes) -> Network:
    return _read_checkpoint(_Reader(buf, "checkpoint"))


def dataset_bytes(ds: WeightDataset) -> bytes:
    out = io.BytesIO()
    out.write(DATASET_MAGIC)
    out.write(struct.pack("<HIIB", VERSION, ds.n_params, len(ds), ds.stats is not None))
    if ds.stats is not None:
        out.write(_f32(ds.stats.min))
        out.write(_f32(ds.stats.max))
    out.write(_f32(ds.snapshots))
    return out.getvalue()


def dataset_from_bytes(buf: bytes) -> WeightDataset:
    r = _Reader(buf, "weight dataset")
    r.magic(DATASET_MAGIC)
    r.version()
    p, s, has_stats = r.unpack("<IIB")
    stats = NormStats(r.floats(p), r.floats(p)) if has_stats else None
    snaps = r.floats(s * p).reshape(s, p)
    return WeightDataset.from_array(snaps, stats=stats) if s else WeightDataset(p, stats=stats)


def update_bytes(collaborator_id: int, round: int, latent) -> bytes:
    latent = np.asarray(latent)
    return (
        UPDATE_MAGIC
        + struct.pack("<HIII", VERSION, collaborator_id, round, latent.size)
        + _f32(latent)
    )


def update_from_bytes(buf: bytes) -> tuple[int, int, np.ndarray]:
    """Returns ``(collaborator_id, round, latent)``."""
    r = _Reader(buf, "update")
    r.magic(UPDATE_MAGIC)
    r.version()
    cid, rnd, n = r.unpack("<III")
    return cid, rnd, r.floats(n)


def _bundle_bytes(net: Network, stats: NormStats, latent_dim: int) -> bytes:
    return checkpoint_bytes(net) + _f32(stats.min) + _f32(stats.max) + struct.pack("<I", latent_dim)


def _read_bundle(buf: bytes, what: str):
    r = _Reader(buf, what)
    net = _read_checkpoint(r)
    p = net.out_dim
    stats = NormStats(r.floats(p), r.floats(p))
    (latent_dim,) = r.unpack("<I")
    return net, stats, latent_dim


def decoder_bytes(decoder: Decoder) -> bytes:
    return _bundle_bytes(decoder.net, decoder.stats, decoder.latent_dim)


def decoder_from_bytes(buf: bytes) -> Decoder:
    net, stats, latent_dim = _read_bundle(buf, "decoder")
    if net.in_dim != latent_dim:
        raise ParseError(f"decoder input {net.in_dim} disagrees with latent dim {latent_dim}")
    return Decoder(net, stats)


def autoencoder_bytes(ae: SymmetricAutoencoder) -> bytes:
    """Full autoencoder in the shipment layout (collaborator keeps this one)."""
    return _bundle_bytes(ae.net, ae.stats, ae.latent_dim)


def autoencoder_from_bytes(buf: bytes) -> SymmetricAutoencoder:
    net, stats, latent_dim = _read_bundle(buf, "autoencoder")
    outs = [l.out_dim for l in net.layers]
    split = outs.index(latent_dim) + 1
    return SymmetricAutoencoder(net, split, stats=stats)


def labeled_bytes(ds: LabeledDataset) -> bytes:
    n, d = ds.inputs.shape
    return (
        DATA_MAGIC
        + struct.pack("<III", n, d, ds.n_classes)
        + _f32(ds.inputs)
        + ds.labels.astype(np.uint8).tobytes()
    )


def labeled_from_bytes(buf: bytes) -> LabeledDataset:
    r = _Reader(buf, "labeled data")
    r.magic(DATA_MAGIC)
    n, d, k = r.unpack("<III")
    inputs = r.floats(n * d).reshape(n, d)
    labels = np.frombuffer(r.take(n), dtype=np.uint8)
    if n and labels.max() >= k:
        raise ParseError(f"label {labels.max()} out of range for {k} classes", offset=r.pos - n)
    return LabeledDataset(inputs, one_hot(labels, k))


def write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def read(path) -> bytes:
    return Path(path).read_bytes()
