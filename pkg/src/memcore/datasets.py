"""Dataset ingestion and rail scaling.

Crossbar inputs must respect the op-amp rails, so every feature is
affinely mapped to [-0.5, 0.5] with min/max taken over the training split
only; zero-span features map to 0. Loaders cover the IDX binary container
(big-endian image/label files) and numeric CSV with optional categorical
index encoding. Desk-scale experiments substitute bundled 8x8 digit
images and synthetic correlated vectors for the full-scale corpora.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

IDX_MAGIC_LABELS = 0x00000801
IDX_MAGIC_IMAGES = 0x00000803


@dataclass
class FeatureScaling:
    lo: np.ndarray
    span: np.ndarray          # hi - lo; zero marks a degenerate feature

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaling":
        lo = features.min(axis=0)
        span = features.max(axis=0) - lo
        return cls(lo=lo, span=span)

    def apply(self, features: np.ndarray) -> np.ndarray:
        span = np.where(self.span == 0.0, 1.0, self.span)
        scaled = (features - self.lo) / span - 0.5
        return np.where(self.span == 0.0, 0.0, scaled)

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return (scaled + 0.5) * self.span + self.lo


@dataclass
class Dataset:
    features: np.ndarray               # (n, d), already scaled to the rails
    labels: np.ndarray | None = None   # class ids or target vectors
    scaling: FeatureScaling | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got {self.features.shape}",
                              module="harness")

    @classmethod
    def from_raw(cls, raw: np.ndarray, labels=None,
                 scaling: FeatureScaling | None = None) -> "Dataset":
        raw = np.asarray(raw, dtype=float)
        scaling = scaling or FeatureScaling.fit(raw)
        return cls(features=scaling.apply(raw), labels=labels, scaling=scaling)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def load_idx(path) -> Dataset:
    """Parse an IDX container: big-endian magic, dimension sizes, raw
    bytes. Pixels scale to [-0.5, 0.5] (0 -> -0.5, 255 -> +0.5)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read IDX file: {exc}", module="harness")
    if len(blob) < 4:
        raise FormatError(f"IDX file truncated at offset {len(blob)}: no magic",
                          module="harness")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic == IDX_MAGIC_LABELS:
        ndim = 1
    elif magic == IDX_MAGIC_IMAGES:
        ndim = 3
    else:
        raise FormatError(f"bad IDX magic 0x{magic:08x} at offset 0", module="harness")
    header_len = 4 + 4 * ndim
    if len(blob) < header_len:
        raise FormatError(f"IDX file truncated at offset {len(blob)}: "
                          f"expected {ndim} dimension sizes", module="harness")
    dims = struct.unpack(f">{ndim}I", blob[4:header_len])
    count = int(np.prod(dims))
    if len(blob) != header_len + count:
        raise FormatError(
            f"IDX payload length {len(blob) - header_len} at offset {header_len} "
            f"does not match dimensions {dims}", module="harness")
    data = np.frombuffer(blob, dtype=np.uint8, offset=header_len)
    if magic == IDX_MAGIC_LABELS:
        return Dataset(features=np.empty((dims[0], 0)), labels=data.astype(int))
    features = data.reshape(dims[0], dims[1] * dims[2]).astype(float)
    scaling = FeatureScaling(lo=np.zeros(features.shape[1]),
                             span=np.full(features.shape[1], 255.0))
    return Dataset(features=scaling.apply(features), scaling=scaling)


def load_csv(path, label_column: int | None = None,
             encode_categorical: bool = True) -> Dataset:
    """Numeric CSV loader with optional per-column categorical index
    encoding and min-max scaling to the rails."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                rows.append((lineno, row))
    except OSError as exc:
        raise FormatError(f"cannot read CSV: {exc}", module="harness")
    if not rows:
        raise FormatError("CSV file has no data rows", module="harness")
    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise FormatError(
                f"CSV line {lineno}: {len(row)} columns, expected {width}",
                module="harness")

    vocab: dict = {}
    table = np.empty((len(rows), width))
    for r, (lineno, row) in enumerate(rows):
        for c, cell in enumerate(row):
            cell = cell.strip()
            try:
                table[r, c] = float(cell)
            except ValueError:
                if not encode_categorical:
                    raise FormatError(
                        f"CSV line {lineno}: non-numeric value {cell!r} in column {c}",
                        module="harness")
                key = (c, cell)
                if key not in vocab:
                    vocab[key] = float(len([k for k in vocab if k[0] == c]))
                table[r, c] = vocab[key]

    labels = None
    if label_column is not None:
        if not (-width <= label_column < width):
            raise ConfigError(f"label column {label_column} out of range", module="harness")
        labels = table[:, label_column].copy()
        table = np.delete(table, label_column % width, axis=1)
    return Dataset.from_raw(table, labels=labels)


def digits_dataset(n_samples: int = 1000, upsample: bool = False,
                   seed: int = 0) -> Dataset:
    """Bundled 8x8 handwritten digits (values 0..16), optionally upsampled
    to 28x28 so the wide-image presets have 784-feature inputs."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = digits.images          # (1797, 8, 8)
    labels = digits.target
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(images))
    images = images[order]
    labels = labels[order]
    if upsample:
        big = np.kron(images, np.ones((1, 3, 3)))           # 24x24
        big = np.pad(big, ((0, 0), (2, 2), (2, 2)))         # 28x28
        flat = big.reshape(len(big), 784)
    else:
        flat = images.reshape(len(images), 64)
    n = min(n_samples, len(flat))
    scaling = FeatureScaling(lo=np.zeros(flat.shape[1]),
                             span=np.full(flat.shape[1], 16.0))
    return Dataset(features=scaling.apply(flat[:n]), labels=labels[:n].astype(int),
                   scaling=scaling)


def digits_split(n_train: int = 1000, upsample: bool = False, seed: int = 0):
    """Deterministic train/test split of the bundled digits."""
    full = digits_dataset(n_samples=10_000, upsample=upsample, seed=seed)
    train = Dataset(features=full.features[:n_train], labels=full.labels[:n_train],
                    scaling=full.scaling)
    test = Dataset(features=full.features[n_train:], labels=full.labels[n_train:],
                   scaling=full.scaling)
    return train, test


def synthetic_correlated(n_samples: int, n_features: int = 41, rank: int = 5,
                         noise: float = 0.08, seed: int = 0) -> Dataset:
    """Low-rank latent structure plus isotropic noise, scaled to rails.

    The stand-in for tabular network-traffic records in anomaly runs.
    """
    rng = np.random.default_rng(seed)
    mixing = rng.normal(size=(rank, n_features))
    latent = rng.normal(size=(n_samples, rank))
    raw = latent @ mixing + noise * rng.normal(size=(n_samples, n_features))
    return Dataset.from_raw(raw)


def inject_anomalies(dataset: Dataset, n_anomalies: int, magnitude: float = 5.0,
                     n_perturbed: int = 8, seed: int = 1):
    """Perturb copies of normal samples by `magnitude` standard deviations
    on a random feature subset, clipped back to the rails.

    Returns (anomalous feature matrix, indices of the source samples).
    """
    rng = np.random.default_rng(seed)
    feats = dataset.features
    std = feats.std(axis=0)
    picks = rng.integers(0, len(feats), size=n_anomalies)
    out = feats[picks].copy()
    for row in out:
        cols = rng.choice(feats.shape[1], size=min(n_perturbed, feats.shape[1]),
                          replace=False)
        signs = rng.choice([-1.0, 1.0], size=cols.size)
        row[cols] = np.clip(row[cols] + signs * magnitude * std[cols], -0.5, 0.5)
    return out, picks


def one_hot_targets(labels: np.ndarray, n_classes: int,
                    hi: float = 0.5, lo: float = -0.5) -> np.ndarray:
    out = np.full((len(labels), n_classes), lo)
    out[np.arange(len(labels)), np.asarray(labels, dtype=int)] = hi
    return out
