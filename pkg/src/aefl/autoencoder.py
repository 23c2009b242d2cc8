"""Symmetric funnel autoencoder over flattened weight vectors.

The network is ``P -> hidden... -> L -> reversed(hidden)... -> P``. Layers
before ``split_index`` form the encoder (run on the collaborator), the
rest form the decoder (shipped to the aggregator).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import nn
from .codec import ModelShape, NormStats, WeightDataset, denormalize, fit_norm, normalize
from .errors import CodecError, ConfigError
from .nn import Network, TrainConfig


def _default_ae_train():
    # plain per-tensor SGD saturates the latent layer once P is in the thousands
    return TrainConfig(learning_rate=2.0, batch_size=4, epochs=500, loss="mse", step_scale="fan_in")


@dataclass
class AEConfig:
    latent_dim: int = 32
    encoder_hidden: tuple[int, ...] = ()
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"
    train: TrainConfig = field(default_factory=_default_ae_train)
    holdout_fraction: float = 0.0


@dataclass
class LatentCode:
    values: np.ndarray
    round: int = 0
    collaborator_id: int = 0

    def __len__(self):
        return self.values.size


def _values(z) -> np.ndarray:
    return z.values if isinstance(z, LatentCode) else np.asarray(z)


def _slice(net: Network, start: int, stop: Optional[int] = None) -> Network:
    return Network(net.layers[start:stop], net.rng_seed)


def _run(layers_net: Network, x, expected: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.shape[-1] != expected:
        raise CodecError(
            f"expected vectors of length {expected}, got {x.shape[-1]}",
            expected=expected,
            actual=x.shape[-1],
        )
    out = nn.forward(layers_net, x)
    return out[0] if x.ndim == 1 else out


@dataclass
class Decoder:
    """Aggregator-side half: decoder layers plus the scaling stats."""

    net: Network
    stats: NormStats

    @property
    def latent_dim(self) -> int:
        return self.net.in_dim

    @property
    def n_params(self) -> int:
        return self.net.out_dim

    def decode(self, z) -> np.ndarray:
        return _run(self.net, _values(z), self.latent_dim)

    def expand(self, z) -> np.ndarray:
        return denormalize(self.decode(z), self.stats)


@dataclass
class SymmetricAutoencoder:
    net: Network
    split_index: int
    stats: Optional[NormStats] = None
    shape: Optional[ModelShape] = None
    config: Optional[AEConfig] = None

    @property
    def n_params(self) -> int:
        return self.net.in_dim

    @property
    def latent_dim(self) -> int:
        return self.net.layers[self.split_index - 1].out_dim

    @property
    def encoder(self) -> Network:
        return _slice(self.net, 0, self.split_index)

    @property
    def decoder(self) -> Network:
        return _slice(self.net, self.split_index)

    def decoder_bundle(self) -> Decoder:
        if self.stats is None:
            raise ValueError("autoencoder has no normalization stats yet")
        return Decoder(self.decoder.copy(), NormStats(self.stats.min.copy(), self.stats.max.copy()))

    def compress(self, w) -> np.ndarray:
        """Raw weights -> latent vector (normalize then encode)."""
        return encode(self, normalize(w, self.stats)).values

    def expand(self, z) -> np.ndarray:
        return denormalize(decode(self, z), self.stats)

    def reconstruct(self, w) -> np.ndarray:
        return self.expand(self.compress(w))


@dataclass
class IdentityCodec:
    """Stand-in codec that transmits weights unchanged (latent == weights)."""

    n_params: int

    @property
    def latent_dim(self) -> int:
        return self.n_params

    def compress(self, w) -> np.ndarray:
        return np.asarray(w, dtype=np.float32).copy()

    def expand(self, z) -> np.ndarray:
        return np.asarray(_values(z), dtype=np.float32).copy()

    def reconstruct(self, w) -> np.ndarray:
        return self.expand(self.compress(w))


def funnel_sizes(n_params: int, latent_dim: int, hidden: Sequence[int] = ()) -> list[int]:
    sizes = [n_params, *hidden, latent_dim]
    if latent_dim < 1:
        raise ConfigError("latent_dim must be positive")
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"encoder sizes must strictly decrease, got {sizes}")
    return sizes + list(reversed(sizes[:-1]))


def ae_param_count(n_params: int, latent_dim: int, hidden: Sequence[int] = ()) -> int:
    sizes = funnel_sizes(n_params, latent_dim, hidden)
    return sum(a * b + b for a, b in zip(sizes, sizes[1:]))


def build_ae(n_params: int, cfg: AEConfig, seed: int = 0, stats: Optional[NormStats] = None,
             shape: Optional[ModelShape] = None) -> SymmetricAutoencoder:
    sizes = funnel_sizes(n_params, cfg.latent_dim, cfg.encoder_hidden)
    n_layers = len(sizes) - 1
    acts = [cfg.hidden_activation] * (n_layers - 1) + [cfg.output_activation]
    net = Network.build(sizes, acts, seed)
    return SymmetricAutoencoder(net, n_layers // 2, stats=stats, shape=shape, config=cfg)


@dataclass
class AEHistory:
    loss: list[float] = field(default_factory=list)
    recreation_accuracy: list[float] = field(default_factory=list)
    holdout_loss: list[float] = field(default_factory=list)
    holdout_accuracy: list[float] = field(default_factory=list)


def holdout_split(n_rows: int, fraction: float) -> int:
    """Number of leading rows used for training; the trailing rows are held out."""
    if fraction <= 0:
        return n_rows
    n_hold = max(1, int(round(n_rows * fraction)))
    return max(1, n_rows - n_hold)


def _normalized_accuracy(a, b, tau):
    return float(np.mean(np.abs(a - b) <= tau))


def train_ae(ae: SymmetricAutoencoder, ds: WeightDataset, cfg: Optional[AEConfig] = None,
             tau: float = 0.05) -> AEHistory:
    """Fit the autoencoder to reproduce the (normalized) snapshots.

    Stats default to ``ds.stats`` or a fresh fit over the training rows. When
    ``cfg.holdout_fraction`` is positive the trailing rows (latest epochs)
    are not trained on and are reported separately. Epoch 0 of the
    history is the untrained state.
    """
    cfg = cfg or ae.config or AEConfig()
    if ds.n_params != ae.n_params:
        raise CodecError(
            f"dataset has {ds.n_params} parameters, autoencoder expects {ae.n_params}",
            expected=ae.n_params,
            actual=ds.n_params,
        )
    if len(ds) < 2:
        raise ValueError("need at least two snapshots to train an autoencoder")
    snaps = ds.snapshots
    n_train = holdout_split(len(snaps), cfg.holdout_fraction)
    if ae.stats is None:
        # held-out rows must not leak into the scaling
        ae.stats = ds.stats if ds.stats is not None else fit_norm(snaps[:n_train])
    x = normalize(snaps, ae.stats)
    train_x, hold_x = x[:n_train], x[n_train:]

    history = AEHistory()

    def record(epoch=None):
        pred = nn.forward(ae.net, train_x)
        history.loss.append(nn.loss(pred, train_x, "mse"))
        history.recreation_accuracy.append(_normalized_accuracy(pred, train_x, tau))
        if len(hold_x):
            hpred = nn.forward(ae.net, hold_x)
            history.holdout_loss.append(nn.loss(hpred, hold_x, "mse"))
            history.holdout_accuracy.append(_normalized_accuracy(hpred, hold_x, tau))

    record()
    tc = cfg.train
    batch = min(tc.batch_size, n_train)
    tc = TrainConfig(tc.learning_rate, batch, tc.epochs, "mse", tc.shuffle_seed, tc.step_scale)
    nn.train(ae.net, train_x, train_x, tc, snapshot_hook=record)
    return history


def encode(ae: SymmetricAutoencoder, flat, round: int = 0, collaborator_id: int = 0) -> LatentCode:
    """Normalized weights -> latent code. Callers normalize first."""
    z = _run(ae.encoder, flat, ae.n_params)
    return LatentCode(z, round, collaborator_id)


def decode(ae: SymmetricAutoencoder, z) -> np.ndarray:
    """Latent code -> weights in the normalized domain."""
    return _run(ae.decoder, _values(z), ae.latent_dim)


def compression_ratio(n_params: int, latent_dim: int) -> float:
    if latent_dim < 1:
        raise ValueError("latent_dim must be >= 1")
    return n_params / latent_dim


def recreation_accuracy(original, predicted, stats: NormStats, tau: float = 0.05) -> float:
    """Fraction of parameters whose normalized values agree within ``tau``."""
    original = np.asarray(original)
    predicted = np.asarray(predicted)
    if original.shape != predicted.shape:
        raise CodecError(
            f"length mismatch {original.shape} vs {predicted.shape}",
            expected=original.size,
            actual=predicted.size,
        )
    if tau <= 0:
        raise ValueError("tau must be positive")
    return _normalized_accuracy(normalize(original, stats), normalize(predicted, stats), tau)
