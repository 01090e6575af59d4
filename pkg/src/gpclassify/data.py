"""Dataset loading, label mapping, standardization and CV fold plans."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    """Feature matrix with labels in {-1, +1}."""

    x: np.ndarray
    y: np.ndarray
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.x)):
            raise ValueError("features contain non-finite values")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.feature_names)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine rescaling fitted on training data only."""

    means: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic k-fold assignment; fold sizes differ by at most one."""

    k: int
    assignments: np.ndarray
    seed: int

    def train_test(self, fold: int):
        test = np.nonzero(self.assignments == fold)[0]
        train = np.nonzero(self.assignments != fold)[0]
        return train, test


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_csv(path, label_column, positive_label: str) -> Dataset:
    """Load a numeric CSV with one label column.

    The label column may be given by name (requires a header row) or by
    integer position.  A header row is auto-detected by a non-numeric
    first line.  The value equal to ``positive_label`` (string
    comparison on the raw cell) maps to +1; the single remaining value
    maps to -1; more than two distinct labels is an error.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    header = None
    first = [c.strip() for c in rows[0]]
    # a data row always contains numeric feature cells, so a header is a
    # first line whose cells are all non-numeric
    if all(not _is_float(c) for c in first):
        header = first
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise ValueError(f"{path}: label column index {label_idx} out of range")
        label_idx %= width
    labels = [r[label_idx].strip() for r in rows]
    distinct = sorted(set(labels))
    if len(distinct) > 2:
        raise ValueError(
            f"{path}: {len(distinct)} distinct labels {distinct[:5]}...; "
            "binary classification needs exactly two"
        )
    if positive_label not in distinct:
        raise ValueError(
            f"{path}: positive label {positive_label!r} absent (found {distinct})"
        )
    y = np.array([1.0 if lab == positive_label else -1.0 for lab in labels])
    feat_idx = [j for j in range(width) if j != label_idx]
    try:
        x = np.array([[float(r[j]) for j in feat_idx] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric feature value ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite feature values")
    names = [header[j] for j in feat_idx] if header else None
    return Dataset(x, y, names)


def load_feature_csv(path) -> np.ndarray:
    """Load an all-numeric CSV of features (optional header), no label column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    if any(not _is_float(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    x = np.array([[float(c) for c in row] for row in rows])
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite feature values")
    return x


def fit_standardizer(train: Dataset) -> Standardizer:
    """Per-feature mean/scale from training data (population convention).

    Constant features get scale 1 so they standardize to exactly zero.
    """
    if train.n < 2:
        raise ValueError("need at least two rows to standardize")
    means = train.x.mean(axis=0)
    scales = train.x.std(axis=0)  # ddof=0
    scales = np.where(scales > 0.0, scales, 1.0)
    return Standardizer(means, scales)


def apply_standardizer(s: Standardizer, data: Dataset) -> Dataset:
    return Dataset((data.x - s.means) / s.scales, data.y, data.feature_names)


def make_folds(n: int, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle by seed, assign round-robin: same (n, k, seed), same plan."""
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} points")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k, assignments, seed)
