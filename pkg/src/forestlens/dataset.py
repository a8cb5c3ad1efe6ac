"""CSV ingestion, preprocessing, bootstrap sampling and stratified folds."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class RawTable:
    column_names: list[str]
    rows: np.ndarray
    source_path: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.column_names):
            raise DataError(
                f"expected {len(self.column_names)} values per row, got shape {rows.shape}"
            )
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self):
        return self.rows.shape[0]

    def column(self, name):
        try:
            return self.rows[:, self.column_names.index(name)]
        except ValueError:
            raise DataError(f"no column named {name!r}; have {self.column_names}") from None


def load_csv(path) -> RawTable:
    """Parse a header + numeric-rows CSV file.

    Rows and columns in error messages are 1-based and count the header as
    row 1, so they match what a text editor shows.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise DataError(f"{path}: no header")
        names = [h.strip() for h in header]
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(names):
                raise DataError(
                    f"{path}: row {lineno} has {len(record)} cells, expected {len(names)}"
                )
            values = []
            for col, cell in enumerate(record, start=1):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: missing value at row {lineno}, column {col}")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {col}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value at row {lineno}, column {col}")
                values.append(v)
            rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return RawTable(names, data, str(path))


def group_average(table: RawTable, group_size: int) -> RawTable:
    """Average consecutive blocks of ``group_size`` rows into one row each."""
    if group_size < 1:
        raise DataError("group_size must be positive")
    n = table.n_rows
    remainder = n % group_size
    if remainder:
        raise DataError(
            f"{n} rows are not divisible by group size {group_size} (remainder {remainder})"
        )
    if group_size == 1:
        return table
    blocks = table.rows.reshape(n // group_size, group_size, -1)
    return RawTable(list(table.column_names), blocks.mean(axis=1), table.source_path)


@dataclass(frozen=True)
class LabelRule:
    """Threshold binning: ``v <= upper_bounds[i]`` falls in class ``i`` or lower."""

    class_names: list[str]
    upper_bounds: list[float]

    def __post_init__(self):
        if len(self.class_names) != len(self.upper_bounds) + 1:
            raise DataError("a label rule needs exactly one more class than bounds")
        if any(lo >= hi for lo, hi in zip(self.upper_bounds, self.upper_bounds[1:])):
            raise DataError("upper_bounds must be strictly increasing")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(list(raw["class_names"]), [float(b) for b in raw["upper_bounds"]])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: invalid label rule ({exc})") from None

    def to_dict(self):
        return {"class_names": list(self.class_names), "upper_bounds": list(self.upper_bounds)}


CLASS_NAMES = ["very low", "low", "medium", "high", "very high"]

# Electrode class boundaries: mass load in mg/cm^2, porosity in %.
DEFAULT_RULES = {
    "mass_load": LabelRule(CLASS_NAMES, [15.0, 25.0, 35.0, 45.0]),
    "porosity": LabelRule(CLASS_NAMES, [47.5, 50.0, 52.5, 55.0]),
}


def apply_label_rule(values, rule: LabelRule) -> np.ndarray:
    # side="left" puts v == bound into the lower class
    return np.searchsorted(np.asarray(rule.upper_bounds), np.asarray(values, float), side="left")


@dataclass(frozen=True)
class LabeledDataset:
    feature_names: list[str]
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.intp)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"feature matrix must be N x M with N, M >= 1; got {X.shape}")
        if X.shape[1] != len(self.feature_names):
            raise DataError("feature_names length does not match feature columns")
        if y.shape != (X.shape[0],):
            raise DataError("need exactly one label per observation")
        if not np.all(np.isfinite(X)):
            raise DataError("feature columns must be finite")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise DataError("label index out of range for the class vocabulary")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", list(self.feature_names))
        object.__setattr__(self, "class_names", list(self.class_names))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def m(self):
        return self.features.shape[1]

    @property
    def k(self):
        return len(self.class_names)

    def select_features(self, indices):
        indices = list(indices)
        if not indices or any(not 0 <= i < self.m for i in indices):
            raise DataError(f"invalid feature subset {indices}")
        return LabeledDataset(
            [self.feature_names[i] for i in indices],
            self.features[:, indices],
            self.labels,
            self.class_names,
        )

    def select_rows(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return LabeledDataset(self.feature_names, self.features[rows], self.labels[rows], self.class_names)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.k)


def make_dataset(table: RawTable, target: str, rule: LabelRule, feature_columns=None) -> LabeledDataset:
    """Bin ``target`` with ``rule``; features default to every column not in ``TARGET_COLUMNS``."""
    if feature_columns is None:
        feature_columns = [c for c in table.column_names if c not in TARGET_COLUMNS and c != target]
    if not feature_columns:
        raise DataError("no feature columns left after removing targets")
    X = np.column_stack([table.column(c) for c in feature_columns])
    y = apply_label_rule(table.column(target), rule)
    return LabeledDataset(list(feature_columns), X, y, list(rule.class_names))


TARGET_COLUMNS = ("mass_load", "porosity")


@dataclass(frozen=True)
class BootstrapSample:
    in_bag: np.ndarray
    oob: np.ndarray = field(default=None)

    def __post_init__(self):
        in_bag = np.asarray(self.in_bag, dtype=np.intp)
        n = in_bag.size
        if self.oob is None:
            drawn = np.zeros(n, bool)
            drawn[in_bag] = True
            oob = np.flatnonzero(~drawn)
        else:
            oob = np.asarray(self.oob, dtype=np.intp)
        in_bag.setflags(write=False)
        oob.setflags(write=False)
        object.__setattr__(self, "in_bag", in_bag)
        object.__setattr__(self, "oob", oob)

    @property
    def n(self):
        return self.in_bag.size


def bootstrap_sample(n: int, seed) -> BootstrapSample:
    """Draw ``n`` indices uniformly with replacement; ``seed`` is an int or a Generator."""
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    rng = np.random.default_rng(seed)
    return BootstrapSample(rng.integers(0, n, size=n))


def identity_sample(n: int) -> BootstrapSample:
    """Every observation exactly once (used for non-bagged trees)."""
    return BootstrapSample(np.arange(n))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_of: np.ndarray
    seed: int

    def split(self, fold):
        train = np.flatnonzero(self.fold_of != fold)
        test = np.flatnonzero(self.fold_of == fold)
        return train, test


def stratified_kfold(dataset: LabeledDataset, k: int, seed: int) -> FoldPlan:
    """Shuffle each class's members, then deal them round-robin across folds.

    The dealing position carries over from one class to the next so that
    overall fold sizes stay balanced too.
    """
    if k < 2:
        raise DataError("k-fold needs k >= 2")
    if k > dataset.n:
        raise DataError(f"cannot make {k} folds from {dataset.n} observations")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(dataset.n, dtype=np.intp)
    start = 0
    for c in range(dataset.k):
        members = np.flatnonzero(dataset.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        fold_of[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    return FoldPlan(k, fold_of, seed)
