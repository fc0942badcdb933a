"""Dataset representation, CSV ingestion, synthetic generation, forget splits.

A :class:`LabeledDataset` is the universe of training samples; a
:class:`ForgetSplit` partitions it into a forget set and a retain set in
response to an unlearning request. Every sample carries a stable integer id
assigned at ingestion so that subsets remain auditable through selection and
noising.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledDataset:
    """Dense feature matrix plus integer class labels and stable sample ids."""

    features: np.ndarray  # float64, shape (n_samples, n_features)
    labels: np.ndarray    # int64, shape (n_samples,)
    n_classes: int
    sample_ids: np.ndarray  # int64, shape (n_samples,), unique

    def __post_init__(self):
        features = _frozen(np.ascontiguousarray(self.features, dtype=np.float64))
        labels = _frozen(np.ascontiguousarray(self.labels, dtype=np.int64))
        ids = _frozen(np.ascontiguousarray(self.sample_ids, dtype=np.int64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", ids)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = features.shape[0]
        if labels.shape != (n,) or ids.shape != (n,):
            raise ValueError("features, labels and sample_ids must have matching lengths")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if n and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")
        if len(np.unique(ids)) != n:
            raise ValueError("sample_ids must be unique")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "LabeledDataset":
        """Row subset (source order preserved by passing sorted positions)."""
        return LabeledDataset(self.features[rows], self.labels[rows],
                              self.n_classes, self.sample_ids[rows])


@dataclass(frozen=True)
class ForgetSplit:
    """Exact partition of a dataset into forget and retain subsets."""

    forget: LabeledDataset
    retain: LabeledDataset
    mode: str  # "random" | "class_wise"
    forget_fraction: float
    target_class: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("random", "class_wise"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if (self.mode == "class_wise") != (self.target_class is not None):
            raise ValueError("target_class is required exactly for class_wise mode")
        f_ids = set(self.forget.sample_ids.tolist())
        r_ids = set(self.retain.sample_ids.tolist())
        if f_ids & r_ids:
            raise ValueError("forget and retain sets share sample ids")
        if self.mode == "class_wise" and self.forget.n_samples:
            if not np.all(self.forget.labels == self.target_class):
                raise ValueError("class_wise forget set must be label-homogeneous")


def load_csv(path, label_column: str, n_classes: int) -> LabeledDataset:
    """Load a labeled dataset from an RFC-4180-style CSV with a header row.

    The label column must hold integers in ``[0, n_classes)``; every other
    column must parse as a real number. Sample ids are assigned 0..n-1 in
    file order.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty dataset (no header row)") from None
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]
        features, labels = [], []
        for row_no, row in enumerate(reader):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            try:
                label = int(row[label_idx])
            except ValueError:
                raise ValueError(f"{path}: row {row_no}: label {row[label_idx]!r} is not an integer") from None
            if not 0 <= label < n_classes:
                raise ValueError(f"{path}: row {row_no}: label {label} out of range [0, {n_classes})")
            vals = []
            for col_idx, col_name in feature_cols:
                try:
                    vals.append(float(row[col_idx]))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {row_no}, column {col_name!r}: "
                        f"non-numeric value {row[col_idx]!r}") from None
            features.append(vals)
            labels.append(label)
    if not features:
        raise ValueError(f"{path}: empty dataset")
    n = len(features)
    return LabeledDataset(np.array(features, dtype=np.float64),
                          np.array(labels, dtype=np.int64),
                          n_classes, np.arange(n, dtype=np.int64))


def save_csv(data: LabeledDataset, path, label_column: str = "label") -> None:
    """Write a dataset to CSV in the same format :func:`load_csv` reads."""
    header = [f"x{j}" for j in range(data.n_features)] + [label_column]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_samples):
            writer.writerow([repr(v) for v in data.features[i]] + [int(data.labels[i])])


def gen_synthetic(n_samples: int, n_features: int, n_classes: int,
                  class_separation: float, seed: int) -> LabeledDataset:
    """Generate a Gaussian-cluster classification task.

    One isotropic unit-variance cluster per class; cluster centers are laid
    out on an axis-aligned lattice so that every pair is at least
    ``class_separation`` apart. Class counts are balanced within one sample.
    Fully deterministic given the seed.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    if n_samples < n_classes:
        raise ValueError(f"n_samples ({n_samples}) must be >= n_classes ({n_classes})")
    if n_features < 1 or class_separation <= 0:
        raise ValueError("n_features must be >= 1 and class_separation > 0")
    # Lattice guarantees pairwise distance >= separation for any n_features:
    # same axis -> coordinates differ by a multiple of the separation;
    # different axes -> distance >= sqrt(2) * separation.
    centers = np.zeros((n_classes, n_features))
    for k in range(n_classes):
        centers[k, k % n_features] = class_separation * (k // n_features + 1)
    base, extra = divmod(n_samples, n_classes)
    labels = np.repeat(np.arange(n_classes), base)
    labels = np.concatenate([labels, np.arange(extra)]).astype(np.int64)
    rng = np.random.default_rng(seed)
    features = centers[labels] + rng.standard_normal((n_samples, n_features))
    order = rng.permutation(n_samples)
    return LabeledDataset(features[order], labels[order], n_classes,
                          np.arange(n_samples, dtype=np.int64))


def standardize_features(data: LabeledDataset,
                         stats: Optional[tuple[np.ndarray, np.ndarray]] = None,
                         ) -> tuple[LabeledDataset, tuple[np.ndarray, np.ndarray]]:
    """Per-column standardization, (x - mean) / std, as an explicit pass.

    Scaling is never applied implicitly at ingestion because additive noise
    magnitudes are only meaningful relative to feature scale. Pass ``stats``
    from a previous call to reuse a fitted transform (e.g. on a test set);
    constant columns are left unscaled.
    """
    if stats is None:
        mean = data.features.mean(axis=0)
        std = data.features.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
    else:
        mean, std = stats
    out = (data.features - mean) / std
    return (LabeledDataset(out, data.labels, data.n_classes, data.sample_ids),
            (mean, std))


def _partition(data: LabeledDataset, forget_pos: np.ndarray) -> tuple[LabeledDataset, LabeledDataset]:
    mask = np.zeros(data.n_samples, dtype=bool)
    mask[forget_pos] = True
    return data.subset(np.flatnonzero(mask)), data.subset(np.flatnonzero(~mask))


def split_random_forget(data: LabeledDataset, fraction: float, seed: int) -> ForgetSplit:
    """Mark a uniformly random ``floor(fraction * n)`` samples as the forget set."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    k = int(fraction * data.n_samples)
    if k < 1:
        raise ValueError(f"fraction {fraction} yields an empty forget set for n={data.n_samples}")
    rng = np.random.default_rng(seed)
    forget_pos = rng.choice(data.n_samples, size=k, replace=False)
    forget, retain = _partition(data, forget_pos)
    return ForgetSplit(forget, retain, "random", fraction)


def split_classwise_forget(data: LabeledDataset, target_class: int,
                           fraction: float, seed: int) -> ForgetSplit:
    """Mark a random ``floor(fraction * |class|)`` subset of one class as the forget set."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    class_pos = np.flatnonzero(data.labels == target_class)
    if class_pos.size == 0:
        raise ValueError(f"class {target_class} has no samples")
    k = int(fraction * class_pos.size)
    if k < 1:
        raise ValueError(f"fraction {fraction} yields an empty forget set for class "
                         f"{target_class} ({class_pos.size} samples)")
    rng = np.random.default_rng(seed)
    forget_pos = rng.choice(class_pos, size=k, replace=False)
    forget, retain = _partition(data, forget_pos)
    return ForgetSplit(forget, retain, "class_wise", fraction, target_class)


def concat(a: LabeledDataset, b: LabeledDataset) -> LabeledDataset:
    """Concatenate two id-disjoint datasets (rows of ``a`` first)."""
    if a.n_classes != b.n_classes or a.n_features != b.n_features:
        raise ValueError("datasets have incompatible shapes")
    return LabeledDataset(np.vstack([a.features, b.features]),
                          np.concatenate([a.labels, b.labels]),
                          a.n_classes,
                          np.concatenate([a.sample_ids, b.sample_ids]))


def exclude_class(data: LabeledDataset, target_class: int) -> LabeledDataset:
    """Drop every sample of one class (used for class-wise test accuracy)."""
    return data.subset(np.flatnonzero(data.labels != target_class))
