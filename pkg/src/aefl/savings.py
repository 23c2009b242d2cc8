"""Communication savings of AE compression versus the one-off decoder shipment.

All sizes are parameter counts, so the savings ratio is dimensionless:

    SR = O*R*N / (C*R*N + cost),   cost = decoder_size * D

where O is the raw update size, C the latent size, R the number of rounds,
N the number of collaborators and D the number of decoders shipped. The
decoder size is either half the autoencoder (``half_ae``) or the exact
decoder parameter count ``L*O + O`` of a single-latent-layer AE (``exact``).
Wire headers are not counted.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

MODES = ("half_ae", "exact")


class InfeasibleError(ValueError):
    """No break-even exists because compression does not shrink the update."""


@dataclass(frozen=True)
class SavingsScenario:
    original_size: float
    compressed_size: float
    comm_rounds: float = 1.0
    collabs: float = 1.0
    ae_size: float = 1.0
    num_decoders: Optional[float] = 1.0  # None: one decoder per collaborator
    decoder_size_mode: str = "half_ae"
    decoder_size: Optional[float] = None  # exact mode override
    zero_cost: bool = False

    def __post_init__(self):
        if self.decoder_size_mode not in MODES:
            raise ValueError(f"unknown decoder_size_mode {self.decoder_size_mode!r}")
        if self.compressed_size < 1:
            raise ValueError("compressed_size must be >= 1")
        if self.comm_rounds <= 0 or self.collabs <= 0:
            raise ValueError("comm_rounds and collabs must be positive")
        if self.num_decoders is not None and self.num_decoders < 1:
            raise ValueError("num_decoders must be >= 1")
        if self.ae_size <= 0:
            raise ValueError("ae_size must be positive")

    @property
    def decoders(self) -> float:
        return self.collabs if self.num_decoders is None else self.num_decoders


def decoder_size(s: SavingsScenario) -> float:
    if s.decoder_size_mode == "half_ae":
        return s.ae_size / 2
    if s.decoder_size is not None:
        return s.decoder_size
    return s.compressed_size * s.original_size + s.original_size


def decoder_cost(s: SavingsScenario) -> float:
    if s.zero_cost:
        return 0.0
    return decoder_size(s) * s.decoders


def savings_ratio(s: SavingsScenario) -> float:
    traffic = s.comm_rounds * s.collabs
    return s.original_size * traffic / (s.compressed_size * traffic + decoder_cost(s))


def _saving_per_update(s: SavingsScenario) -> float:
    gain = s.original_size - s.compressed_size
    if gain <= 0:
        raise InfeasibleError(
            f"original size {s.original_size} does not exceed compressed size {s.compressed_size}"
        )
    return gain


def break_even_rounds(s: SavingsScenario) -> float:
    """Rounds at which SR reaches 1 (``s.comm_rounds`` is ignored)."""
    return decoder_cost(s) / (s.collabs * _saving_per_update(s))


def break_even_collaborators(s: SavingsScenario) -> float:
    """Collaborators at which SR reaches 1 with a single shared decoder."""
    s = replace(s, num_decoders=1.0)
    return decoder_cost(s) / (s.comm_rounds * _saving_per_update(s))


def sweep(s: SavingsScenario, axis: str, start: float, stop: float, steps: int,
          log: bool = False) -> list[tuple[float, float]]:
    """``(axis value, SR)`` pairs for ``axis`` in ``rounds`` or ``collabs``."""
    if start <= 0 or stop < start or steps < 1:
        raise ValueError("need 0 < start <= stop and steps >= 1")
    if steps == 1:
        values = np.array([start], dtype=np.float64)
    elif log:
        values = np.geomspace(start, stop, steps)
    else:
        values = np.linspace(start, stop, steps)
    field = {"rounds": "comm_rounds", "collabs": "collabs"}.get(axis)
    if field is None:
        raise ValueError(f"axis must be 'rounds' or 'collabs', got {axis!r}")
    return [(float(v), savings_ratio(replace(s, **{field: float(v)}))) for v in values]
