"""Synthetic labeled datasets, grayscale conversion, partitioning and IDX ingestion."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class Layout:
    kind: str = "flat"  # flat | rgb | gray
    height: int = 0
    width: int = 0

    @property
    def channels(self) -> int:
        return 3 if self.kind == "rgb" else 1


FLAT = Layout()


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (n, d) float32
    targets: np.ndarray  # (n, k) one-hot float32
    layout: Layout = FLAT

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets have different row counts")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)

    @property
    def n_classes(self) -> int:
        return self.targets.shape[1]


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, k), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1.0
    return out


def gen_blobs(n: int, d: int, k: int, spread: float, seed: int = 0,
              layout: Layout = FLAT) -> LabeledDataset:
    """``k`` Gaussian clusters with centers drawn uniformly from the unit cube.

    Class sizes differ by at most one.
    """
    if k < 2 or n < k:
        raise ValueError("need k >= 2 and n >= k")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(k, d))
    labels = rng.permutation(np.arange(n) % k)
    noise = rng.standard_normal((n, d)) * spread
    inputs = (centers[labels] + noise).astype(np.float32)
    return LabeledDataset(inputs, one_hot(labels, k), layout)


def rgb_layout(height: int, width: int) -> Layout:
    return Layout("rgb", height, width)


def to_grayscale(ds: LabeledDataset) -> LabeledDataset:
    """Replace every pixel's channels by its luminance, keeping all three channels.

    Pixels are stored interleaved (R, G, B per pixel).
    """
    if ds.layout.kind != "rgb":
        raise ValueError(f"grayscale conversion needs an rgb layout, got {ds.layout.kind}")
    n = len(ds)
    px = ds.inputs.reshape(n, -1, 3).astype(np.float64)
    lum = px @ LUMA
    gray = np.repeat(lum[:, :, None], 3, axis=2).reshape(n, -1).astype(np.float32)
    return LabeledDataset(gray, ds.targets.copy(), Layout("gray", ds.layout.height, ds.layout.width))


def partition(ds: LabeledDataset, n_parts: int, seed: int = 0) -> list[LabeledDataset]:
    """IID shuffled split into ``n_parts`` disjoint pieces whose sizes differ by at most one."""
    if not 1 <= n_parts <= len(ds):
        raise ValueError(f"cannot split {len(ds)} rows into {n_parts} parts")
    order = np.random.default_rng(seed).permutation(len(ds))
    return [
        LabeledDataset(ds.inputs[idx], ds.targets[idx], ds.layout)
        for idx in np.array_split(order, n_parts)
    ]


def _read_header(buf: bytes, magic: int, n_dims: int, what: str) -> tuple[int, ...]:
    need = 4 * (1 + n_dims)
    if len(buf) < need:
        raise ParseError(f"{what} file truncated in header", offset=len(buf))
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise ParseError(f"bad {what} magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    return struct.unpack_from(f">{n_dims}I", buf, 4)


def load_idx(images_path, labels_path, n_classes: Optional[int] = None) -> LabeledDataset:
    """Read an IDX image/label pair; pixels scaled to [0, 1], labels one-hot."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    n_img, rows, cols = _read_header(img, IDX_IMAGES_MAGIC, 3, "images")
    (n_lab,) = _read_header(lab, IDX_LABELS_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise ParseError(f"{n_img} images but {n_lab} labels", offset=4)
    body = rows * cols * n_img
    if len(img) < 16 + body:
        raise ParseError("images file truncated", offset=len(img))
    if len(lab) < 8 + n_lab:
        raise ParseError("labels file truncated", offset=len(lab))
    pixels = np.frombuffer(img, dtype=np.uint8, count=body, offset=16)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=8)
    k = n_classes or (int(labels.max()) + 1 if n_lab else 0)
    inputs = (pixels.reshape(n_img, rows * cols).astype(np.float32)) / np.float32(255.0)
    return LabeledDataset(inputs, one_hot(labels, k), Layout("gray", rows, cols))
