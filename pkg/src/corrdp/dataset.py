"""Tabular dataset container and preprocessing steps.

Loading from CSV, missing-value and constant-feature filtering with median
imputation, min-max normalization onto [-1, 1], and stratified train/test
splitting. Every operation is a pure function returning a new Dataset;
the arrays inside a Dataset are frozen so instances can be shared freely.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np


class DatasetError(ValueError):
    """Malformed input data or a degenerate preprocessing result."""


@dataclass(frozen=True)
class PreprocessConfig:
    """Thresholds and seeds for the non-private preprocessing steps."""

    missing_threshold: float = 0.2
    split_ratio: float = 0.8
    seed: int = 0
    normalize_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.missing_threshold <= 1.0:
            raise DatasetError(f"missing_threshold must be in [0,1], got {self.missing_threshold}")
        if not 0.0 < self.split_ratio < 1.0:
            raise DatasetError(f"split_ratio must be in (0,1), got {self.split_ratio}")
        if tuple(self.normalize_range) != (-1.0, 1.0):
            raise DatasetError("normalize_range is fixed to [-1, 1]")


@dataclass(frozen=True)
class Dataset:
    """An immutable numeric record x feature matrix with binary labels.

    Cells that were missing in the source keep a True entry in
    ``missing_mask`` forever; their value is NaN until imputation fills
    them. ``norm_params`` holds the per-feature (min, max) pairs once
    ``normalize`` has run, enabling an exact inverse transform. ``audit``
    accumulates (feature, reason) pairs for every removed feature.
    """

    values: np.ndarray
    feature_names: tuple[str, ...]
    label: np.ndarray
    missing_mask: np.ndarray
    norm_params: tuple[tuple[float, float], ...] | None = None
    audit: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        label = np.array(self.label, dtype=float)
        mask = np.array(self.missing_mask, dtype=bool)
        if values.ndim != 2:
            raise DatasetError("values must be a 2-d matrix")
        l, n = values.shape
        if l < 2:
            raise DatasetError(f"need at least 2 records, got {l}")
        if n < 1:
            raise DatasetError("need at least 1 feature")
        if len(self.feature_names) != n:
            raise DatasetError("feature_names length does not match value columns")
        if len(set(self.feature_names)) != n:
            raise DatasetError("feature names must be unique")
        if label.shape != (l,):
            raise DatasetError("label must be a vector with one entry per record")
        if not np.all(np.isin(label, (-1.0, 1.0))):
            raise DatasetError("labels must be encoded as -1/+1")
        if mask.shape != values.shape:
            raise DatasetError("missing_mask shape must match values")
        if not np.all(np.isfinite(values[~mask])):
            raise DatasetError("non-missing cells must be finite")
        if self.norm_params is not None and len(self.norm_params) != n:
            raise DatasetError("norm_params length does not match feature count")
        for arr in (values, label, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "audit", tuple(self.audit))

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DatasetError(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_index(name)]

    def restrict(self, names) -> "Dataset":
        """Keep only the named features, in the given order."""
        idx = [self.feature_index(n) for n in names]
        if not idx:
            raise DatasetError("cannot restrict to an empty feature set")
        params = None
        if self.norm_params is not None:
            params = tuple(self.norm_params[i] for i in idx)
        return replace(
            self,
            values=self.values[:, idx],
            feature_names=tuple(names),
            missing_mask=self.missing_mask[:, idx],
            norm_params=params,
        )

    def take_records(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return replace(
            self,
            values=self.values[idx],
            label=self.label[idx],
            missing_mask=self.missing_mask[idx],
        )

    def drop_record(self, index: int) -> "Dataset":
        keep = [i for i in range(self.n_records) if i != index]
        return self.take_records(keep)

    def audit_json(self) -> str:
        return json.dumps([{"feature": f, "reason": r} for f, r in self.audit])


def _encode_labels(raw: list[str], column: str) -> np.ndarray:
    classes = sorted(set(raw))
    if len(classes) != 2:
        raise DatasetError(f"label column {column!r} must have exactly 2 classes, got {len(classes)}")
    lookup = {classes[0]: -1.0, classes[1]: 1.0}
    return np.array([lookup[v] for v in raw])


def load_csv(path, label_column: str, categorical=None) -> Dataset:
    """Load a comma-separated, UTF-8, headered file into a Dataset.

    Empty cells are treated as missing. Columns are numeric when every
    non-missing cell parses as a float; anything else is a categorical
    column, integer-encoded by sorted category label. Passing an explicit
    ``categorical`` collection disables auto-detection: undeclared columns
    must then parse as numeric and a bad cell is reported by row/column.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DatasetError(f"no such file: {path}") from None
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DatasetError(f"{path}: duplicate feature names in header")
    if label_column not in header:
        raise DatasetError(f"{path}: label column {label_column!r} not found")
    body = rows[1:]
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")

    label_pos = header.index(label_column)
    raw_labels = [row[label_pos].strip() for row in body]
    if any(v == "" for v in raw_labels):
        raise DatasetError(f"{path}: label column {label_column!r} has missing values")
    label = _encode_labels(raw_labels, label_column)

    names = [h for i, h in enumerate(header) if i != label_pos]
    cols = [[row[i].strip() for row in body] for i in range(len(header)) if i != label_pos]
    declared = None if categorical is None else set(categorical)

    l = len(body)
    values = np.full((l, len(names)), np.nan)
    mask = np.zeros((l, len(names)), dtype=bool)
    for j, (name, col) in enumerate(zip(names, cols)):
        present = [(r, cell) for r, cell in enumerate(col) if cell != ""]
        for r, cell in enumerate(col):
            mask[r, j] = cell == ""
        numeric = None
        if declared is None or name not in declared:
            numeric = []
            for r, cell in present:
                try:
                    numeric.append((r, float(cell)))
                except ValueError:
                    if declared is not None:
                        raise DatasetError(
                            f"{path}: row {r + 2}, column {name!r}: cannot parse {cell!r} as a number"
                        ) from None
                    numeric = None
                    break
        if numeric is not None:
            for r, v in numeric:
                values[r, j] = v
        else:
            codes = {c: k for k, c in enumerate(sorted({cell for _, cell in present}))}
            for r, cell in present:
                values[r, j] = codes[cell]

    return Dataset(values=values, feature_names=tuple(names), label=label, missing_mask=mask)


def drop_missing_and_constant(ds: Dataset, cfg: PreprocessConfig) -> Dataset:
    """Remove over-missing and single-valued features, then impute.

    Features whose missing fraction exceeds the threshold go first, then
    features with fewer than two distinct observed values. Surviving
    missing cells are filled with the feature median. Idempotent.
    """
    frac = ds.missing_mask.mean(axis=0)
    keep, audit = [], list(ds.audit)
    for j, name in enumerate(ds.feature_names):
        if frac[j] > cfg.missing_threshold:
            audit.append((name, f"missing fraction {frac[j]:.3f} > {cfg.missing_threshold}"))
            continue
        observed = ds.values[~ds.missing_mask[:, j], j]
        if np.unique(observed).size < 2:
            audit.append((name, "single observed value"))
            continue
        keep.append(j)
    if not keep:
        raise DatasetError("all features removed; dataset is degenerate")

    values = ds.values[:, keep].copy()
    mask = ds.missing_mask[:, keep]
    for j in range(values.shape[1]):
        miss = mask[:, j]
        if miss.any():
            values[miss, j] = np.median(values[~miss, j])
    params = None
    if ds.norm_params is not None:
        params = tuple(ds.norm_params[j] for j in keep)
    return replace(
        ds,
        values=values,
        feature_names=tuple(ds.feature_names[j] for j in keep),
        missing_mask=mask,
        norm_params=params,
        audit=tuple(audit),
    )


def normalize(ds: Dataset) -> Dataset:
    """Affinely map each feature so its observed min/max land on -1/+1."""
    if not np.all(np.isfinite(ds.values)):
        raise DatasetError("normalize requires imputed values; run drop_missing_and_constant first")
    lo = ds.values.min(axis=0)
    hi = ds.values.max(axis=0)
    flat = np.nonzero(hi == lo)[0]
    if flat.size:
        raise DatasetError(f"constant feature {ds.feature_names[flat[0]]!r} cannot be normalized")
    values = 2.0 * (ds.values - lo) / (hi - lo) - 1.0
    params = tuple((float(a), float(b)) for a, b in zip(lo, hi))
    return replace(ds, values=values, norm_params=params)


def denormalize(ds: Dataset) -> Dataset:
    """Invert ``normalize`` using the retained mapping parameters."""
    if ds.norm_params is None:
        raise DatasetError("dataset carries no normalization parameters")
    lo = np.array([p[0] for p in ds.norm_params])
    hi = np.array([p[1] for p in ds.norm_params])
    values = (ds.values + 1.0) / 2.0 * (hi - lo) + lo
    return replace(ds, values=values, norm_params=None)


def train_test_split(ds: Dataset, cfg: PreprocessConfig) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split; returns (train, test)."""
    rng = np.random.default_rng(cfg.seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (-1.0, 1.0):
        members = np.nonzero(ds.label == cls)[0]
        if members.size < 2:
            raise DatasetError(f"class {cls:+.0f} has fewer than 2 records")
        perm = rng.permutation(members)
        n_train = int(round(cfg.split_ratio * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        train_idx.extend(perm[:n_train])
        test_idx.extend(perm[n_train:])
    return ds.take_records(sorted(train_idx)), ds.take_records(sorted(test_idx))
