"""Experiment configuration: JSON document, schema-checked, mapped to dataclasses.

Every section and key is optional; omitted values take the desk-scale
defaults below. Unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from .autoencoder import AEConfig
from .errors import ConfigError
from .nn import TrainConfig

_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_sizes = {"type": "array", "items": _int}
_act = {"enum": ["identity", "sigmoid", "tanh", "relu"]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


SCHEMA = _obj({
    "data": _obj({
        "n": _int,
        "height": _int,
        "width": _int,
        "channels": {"enum": [1, 3]},
        "classes": {"type": "integer", "minimum": 2},
        "spread": {"type": "number", "minimum": 0},
        "grayscale": {"type": "array", "items": _nonneg_int},
        "idx": _obj({"images": {"type": "string"}, "labels": {"type": "string"}},
                    required=("images", "labels")),
    }),
    "model": _obj({
        "hidden": _sizes,
        "hidden_activation": _act,
        "learning_rate": _pos,
        "batch_size": _int,
    }),
    "prepass": _obj({
        "epochs": {"type": "integer", "minimum": 2},
        "snapshot_interval": {"type": "string", "pattern": r"^(per_epoch|per_n_batches:[1-9][0-9]*)$"},
        "ae": _obj({
            "latent_dim": _int,
            "hidden": _sizes,
            "hidden_activation": _act,
            "output_activation": _act,
            "lr": _pos,
            "epochs": _int,
            "batch_size": _int,
            "step_scale": {"enum": ["uniform", "fan_in"]},
            "holdout_fraction": {"type": "number", "minimum": 0, "maximum": 0.9},
        }),
    }),
    "federated": _obj({
        "rounds": _nonneg_int,
        "local_epochs": _nonneg_int,
        "collaborators": _int,
        "compression": {"enum": ["on", "off"]},
        "seed": _nonneg_int,
        "retrain_every": _nonneg_int,
    }),
    "validation": _obj({
        "max_mean_delta_acc": {"type": "number", "minimum": 0},
        "max_delta_acc": {"type": "number", "minimum": 0},
        "max_mean_delta_loss": {"type": ["number", "null"], "minimum": 0},
        "max_delta_loss": {"type": ["number", "null"], "minimum": 0},
        "tau": _pos,
    }),
    "output": _obj({"dir": {"type": "string"}}),
})


@dataclass
class DataConfig:
    n: int = 2000
    height: int = 16
    width: int = 16
    channels: int = 3
    classes: int = 4
    spread: float = 1.5
    grayscale: list[int] = field(default_factory=lambda: [1])
    idx: Optional[dict] = None

    @property
    def dim(self) -> int:
        return self.height * self.width * self.channels


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [16])
    hidden_activation: str = "tanh"
    learning_rate: float = 0.03
    batch_size: int = 32


@dataclass
class AESection:
    latent_dim: int = 32
    hidden: list[int] = field(default_factory=list)
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"
    lr: float = 2.0
    epochs: int = 500
    batch_size: int = 4
    step_scale: str = "fan_in"
    holdout_fraction: float = 0.0


@dataclass
class PrepassConfig:
    epochs: int = 40
    snapshot_interval: str = "per_epoch"
    ae: AESection = field(default_factory=AESection)


@dataclass
class FederatedConfig:
    rounds: int = 40
    local_epochs: int = 5
    collaborators: int = 2
    compression: str = "on"
    seed: int = 0
    retrain_every: int = 0


@dataclass
class ValidationConfig:
    max_mean_delta_acc: float = 0.05
    max_delta_acc: float = 0.15
    max_mean_delta_loss: Optional[float] = None
    max_delta_loss: Optional[float] = None
    tau: float = 0.05


@dataclass
class OutputConfig:
    dir: str = "runs/desk"


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    prepass: PrepassConfig = field(default_factory=PrepassConfig)
    federated: FederatedConfig = field(default_factory=FederatedConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def seed(self) -> int:
        return self.federated.seed

    @property
    def compression(self) -> bool:
        return self.federated.compression == "on"

    def classifier_train(self) -> TrainConfig:
        m = self.model
        return TrainConfig(m.learning_rate, m.batch_size, 1, "cross_entropy", self.seed)

    def ae_config(self) -> AEConfig:
        a = self.prepass.ae
        train = TrainConfig(a.lr, a.batch_size, a.epochs, "mse", self.seed, a.step_scale)
        return AEConfig(a.latent_dim, tuple(a.hidden), a.hidden_activation, a.output_activation,
                        train, a.holdout_fraction)

    def to_dict(self) -> dict:
        return asdict(self)


def _error_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def from_dict(doc: dict) -> ExperimentConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        raise ConfigError(f"{_error_path(err)}: {err.message}")
    doc = dict(doc)
    pre = dict(doc.get("prepass", {}))
    ae = AESection(**pre.pop("ae", {}))
    cfg = ExperimentConfig(
        data=DataConfig(**doc.get("data", {})),
        model=ModelConfig(**doc.get("model", {})),
        prepass=PrepassConfig(ae=ae, **pre),
        federated=FederatedConfig(**doc.get("federated", {})),
        validation=ValidationConfig(**doc.get("validation", {})),
        output=OutputConfig(**doc.get("output", {})),
    )
    bad = [g for g in cfg.data.grayscale if g >= cfg.federated.collaborators]
    if bad:
        raise ConfigError(f"data.grayscale: partitions {bad} exceed collaborator count")
    if cfg.data.grayscale and (cfg.data.channels != 3 or cfg.data.idx is not None):
        raise ConfigError("data.grayscale: needs synthetic data with channels == 3")
    if cfg.data.idx is None and cfg.data.n < cfg.federated.collaborators:
        raise ConfigError("data.n: fewer rows than collaborators")
    return cfg


def load(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(doc)
