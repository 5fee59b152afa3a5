"""Flow-dataset ingestion and preparation.

Reads flow-feature CSVs (CICIDS2017-style: header row, numeric features, a
string label column, stray NaN/Infinity cells) or generates synthetic
two-cluster flow data, then splits, min-max normalizes and shards the
training set across participants. Every stage is deterministic under a
fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .nn import Batch

logger = logging.getLogger(__name__)

# Default label mapping: benign flows are class 0, every other label is an
# attack. Keys are compared after str() + strip().
DEFAULT_LABEL_MAP: Mapping[str, int] = {"BENIGN": 0}


class DataError(Exception):
    """Raised when input data cannot be ingested or prepared."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with binary labels (0 = normal, 1 = attack)."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise ValueError("label count does not match feature rows")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length does not match feature columns")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain NaN or infinite values")
        if len(self.labels) and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be binary (0/1)")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.feature_names)

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels)


@dataclass(frozen=True)
class Shard:
    """One participant's private slice of the training set."""

    owner_id: int
    samples: Dataset

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a two-cluster synthetic flow dataset."""

    n_samples: int
    n_features: int
    class_ratio: float
    separation: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_samples < 2:
            raise ValueError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.n_features < 1:
            raise ValueError(f"n_features must be >= 1, got {self.n_features}")
        if not 0.0 < self.class_ratio < 1.0:
            raise ValueError(f"class_ratio must lie in (0, 1), got {self.class_ratio}")
        if self.separation <= 0.0:
            raise ValueError(f"separation must be > 0, got {self.separation}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


def load_csv(
    path: str | Path,
    label_column: str,
    drop_columns: Sequence[str] = (),
    label_map: Mapping[str, int] | None = None,
) -> tuple[Dataset, int]:
    """Ingest a flow-feature CSV.

    Column names are matched after whitespace stripping (CICIDS2017 headers
    carry leading spaces). Rows containing NaN or infinite feature values are
    dropped. Returns the cleaned dataset and the dropped-row count.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CSV file not found: {path}")
    try:
        df = pd.read_csv(path, skipinitialspace=True, low_memory=False)
    except Exception as exc:
        raise DataError(f"could not parse {path}: {exc}") from exc

    df.columns = [str(c).strip() for c in df.columns]
    label_column = label_column.strip()
    if label_column not in df.columns:
        raise DataError(f"label column {label_column!r} not found in {path}")

    drops = {str(c).strip() for c in drop_columns}
    feature_cols = [c for c in df.columns if c != label_column and c not in drops]
    if not feature_cols:
        raise DataError(f"no feature columns remain after dropping {sorted(drops)}")

    mapping = DEFAULT_LABEL_MAP if label_map is None else label_map
    mapping = {str(k).strip(): int(v) for k, v in mapping.items()}
    if any(v not in (0, 1) for v in mapping.values()):
        raise DataError("label map values must be 0 or 1")
    labels = df[label_column].map(lambda v: mapping.get(str(v).strip(), 1)).to_numpy(np.int64)

    columns = []
    for col in feature_cols:
        series = df[col]
        if not pd.api.types.is_numeric_dtype(series):
            coerced = pd.to_numeric(series, errors="coerce")
            bad = coerced.isna() & series.notna()
            if bad.any():
                row = int(bad.idxmax())
                raise DataError(
                    f"non-numeric value {series.iloc[row]!r} in column {col!r} at row {row}"
                )
            series = coerced
        columns.append(series.to_numpy(np.float64))
    matrix = np.column_stack(columns)

    keep = np.isfinite(matrix).all(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        logger.info("dropped %d rows with NaN/infinite feature values from %s", dropped, path.name)
    matrix = matrix[keep]
    labels = labels[keep]
    if len(labels) == 0:
        raise DataError(f"zero usable rows in {path} after cleaning")
    return Dataset(matrix, labels, tuple(feature_cols)), dropped


def load_flow_data(
    path: str | Path,
    label_column: str,
    drop_columns: Sequence[str] = (),
    label_map: Mapping[str, int] | None = None,
) -> tuple[Dataset, int]:
    """Ingest one CSV, or every *.csv under a directory, concatenated.

    Multi-file datasets (the usual distribution format for flow captures)
    must agree on their feature columns after dropping.
    """
    path = Path(path)
    if not path.is_dir():
        return load_csv(path, label_column, drop_columns, label_map)
    files = sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no CSV files found under {path}")
    parts: list[Dataset] = []
    dropped = 0
    for f in files:
        ds, d = load_csv(f, label_column, drop_columns, label_map)
        if parts and ds.feature_names != parts[0].feature_names:
            raise DataError(
                f"feature columns in {f.name} do not match {files[0].name}"
            )
        parts.append(ds)
        dropped += d
    features = np.vstack([p.features for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    return Dataset(features, labels, parts[0].feature_names), dropped


def split(
    dataset: Dataset,
    train_fraction: float,
    seed: int | np.random.Generator,
    balanced: bool = False,
) -> tuple[Dataset, Dataset]:
    """Random train/validation split.

    With ``balanced=True`` the majority class is first downsampled so both
    sides end up with an (almost) 50/50 normal/attack mix; otherwise the split
    is a plain seeded permutation with the first floor(fraction*N) rows going
    to the training side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)

    if balanced:
        idx0 = np.flatnonzero(dataset.labels == 0)
        idx1 = np.flatnonzero(dataset.labels == 1)
        m = min(len(idx0), len(idx1))
        if m == 0:
            raise DataError("balanced split requires samples of both classes")
        train_parts, val_parts = [], []
        for idx in (idx0, idx1):
            chosen = rng.permutation(idx)[:m]
            n_train = int(m * train_fraction)
            if n_train == 0 or n_train == m:
                raise DataError(
                    f"dataset too small for a non-empty balanced split "
                    f"({m} per class at fraction {train_fraction})"
                )
            train_parts.append(chosen[:n_train])
            val_parts.append(chosen[n_train:])
        train_idx = rng.permutation(np.concatenate(train_parts))
        val_idx = rng.permutation(np.concatenate(val_parts))
        return dataset.take(train_idx), dataset.take(val_idx)

    perm = rng.permutation(len(dataset))
    n_train = int(len(dataset) * train_fraction)
    if n_train == 0 or n_train == len(dataset):
        raise DataError(
            f"dataset of {len(dataset)} rows too small for a non-empty split "
            f"at fraction {train_fraction}"
        )
    return dataset.take(perm[:n_train]), dataset.take(perm[n_train:])


def normalize(
    train: Dataset,
    others: Sequence[Dataset] = (),
) -> tuple[Dataset, list[Dataset], np.ndarray]:
    """Min-max scale all datasets to [0, 1] using statistics from train only.

    Returns the scaled train set, the scaled others, and the per-feature
    (min, max) table. Constant training features map to 0 everywhere; values
    outside the training range are clamped.
    """
    if len(train) == 0:
        raise ValueError("cannot normalize with an empty training set")
    mins = train.features.min(axis=0)
    maxs = train.features.max(axis=0)
    table = np.stack([mins, maxs], axis=1)
    scale = maxs - mins
    constant = scale == 0.0
    safe_scale = np.where(constant, 1.0, scale)

    def apply(ds: Dataset) -> Dataset:
        x = np.clip((ds.features - mins) / safe_scale, 0.0, 1.0)
        x[:, constant] = 0.0
        return Dataset(x, ds.labels, ds.feature_names)

    return apply(train), [apply(ds) for ds in others], table


def shard_dataset(
    train: Dataset, n_participants: int, seed: int | np.random.Generator
) -> list[Shard]:
    """Random equal-size shards; remainder rows are discarded."""
    if n_participants < 1:
        raise ValueError(f"n_participants must be >= 1, got {n_participants}")
    if n_participants > len(train):
        raise DataError(
            f"cannot shard {len(train)} rows across {n_participants} participants"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(train))
    size = len(train) // n_participants
    leftover = len(train) - size * n_participants
    if leftover:
        logger.info("discarding %d remainder rows to keep shards equal-sized", leftover)
    return [
        Shard(owner_id=i, samples=train.take(perm[i * size : (i + 1) * size]))
        for i in range(n_participants)
    ]


def synth_generate(spec: SynthSpec) -> Dataset:
    """Two Gaussian clusters with unit covariance, labels by cluster.

    Cluster means sit ``spec.separation`` apart along the all-ones direction;
    cluster 1 holds the attack samples.
    """
    rng = np.random.default_rng(spec.seed)
    n_attack = int(round(spec.n_samples * spec.class_ratio))
    n_normal = spec.n_samples - n_attack
    if n_attack == 0 or n_normal == 0:
        raise ValueError(
            f"class_ratio {spec.class_ratio} leaves an empty class for "
            f"{spec.n_samples} samples"
        )
    offset = spec.separation / np.sqrt(spec.n_features)
    normal = rng.normal(0.0, 1.0, size=(n_normal, spec.n_features))
    attack = rng.normal(0.0, 1.0, size=(n_attack, spec.n_features)) + offset
    features = np.vstack([normal, attack])
    labels = np.concatenate([np.zeros(n_normal, np.int64), np.ones(n_attack, np.int64)])
    perm = rng.permutation(spec.n_samples)
    names = tuple(f"f{i:02d}" for i in range(spec.n_features))
    return Dataset(features[perm], labels[perm], names)
