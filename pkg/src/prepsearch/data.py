"""Tabular datasets: CSV ingestion, synthetic generation, seeded splits.

Data is stored column-major. A numeric column is a float64 array with NaN
marking missing cells; a categorical column is an object array of string
tokens with None marking missing cells. Missing values are first-class:
nothing in this module ever fills them in, and equality treats two missing
cells as equal.

Class labels are dense integers assigned by first appearance of the label
token, with the original tokens kept in ``label_names``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateSplit,
    EmptyDataset,
    MissingLabelColumn,
    UnparseableRow,
)


class ColumnKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


def _parse_finite(token: str) -> float | None:
    """Return the float value of token, or None when it is not a finite number."""
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature columns plus dense integer class labels.

    ``name`` is display provenance only and is excluded from equality.
    """

    name: str
    columns: tuple[np.ndarray, ...]
    column_kinds: tuple[ColumnKind, ...]
    column_names: tuple[str, ...]
    labels: np.ndarray
    label_names: tuple[str, ...]
    label_column: str = "label"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        n = labels.shape[0]
        cols = []
        for col, kind in zip(self.columns, self.column_kinds, strict=True):
            if kind is ColumnKind.NUMERIC:
                arr = np.asarray(col, dtype=np.float64).copy()
            else:
                arr = np.asarray(col, dtype=object).copy()
            if arr.shape != (n,):
                raise DataError(f"column length {arr.shape} does not match {n} labels")
            arr.setflags(write=False)
            cols.append(arr)
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "column_kinds", tuple(self.column_kinds))
        object.__setattr__(self, "column_names", tuple(str(c) for c in self.column_names))
        object.__setattr__(self, "label_names", tuple(str(c) for c in self.label_names))
        if len(self.column_names) != len(cols):
            raise DataError("column_names length does not match columns")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_names)):
            raise DataError("labels reference classes outside label_names")

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def classes_present(self) -> int:
        return int(np.unique(self.labels).size)

    def numeric_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.column_kinds) if k is ColumnKind.NUMERIC]

    def categorical_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.column_kinds) if k is ColumnKind.CATEGORICAL]

    def numeric_matrix(self) -> np.ndarray:
        """Column-stacked numeric block, shape (n_rows, n_numeric)."""
        idx = self.numeric_indices()
        if not idx:
            return np.empty((self.n_rows, 0), dtype=np.float64)
        return np.column_stack([self.columns[i] for i in idx])

    def missing_count(self) -> int:
        total = 0
        for col, kind in zip(self.columns, self.column_kinds):
            if kind is ColumnKind.NUMERIC:
                total += int(np.isnan(col).sum())
            else:
                total += sum(1 for v in col if v is None)
        return total

    def has_missing(self) -> bool:
        return self.missing_count() > 0

    def take_rows(self, index: np.ndarray, name: str | None = None) -> "Dataset":
        """Row subset by integer index array. Class bookkeeping is preserved."""
        return Dataset(
            name=name if name is not None else self.name,
            columns=tuple(col[index] for col in self.columns),
            column_kinds=self.column_kinds,
            column_names=self.column_names,
            labels=self.labels[index],
            label_names=self.label_names,
            label_column=self.label_column,
        )

    def check(self) -> None:
        """Ingestion invariants: at least 2 rows, 1 feature column, 2 classes."""
        if self.n_rows < 2:
            raise EmptyDataset(f"{self.name}: needs at least 2 rows, has {self.n_rows}")
        if self.n_cols < 1:
            raise EmptyDataset(f"{self.name}: needs at least 1 feature column")
        if self.classes_present() < 2:
            raise DataError(f"{self.name}: label column has a single class")

    def decoded_labels(self) -> tuple[str, ...]:
        return tuple(self.label_names[i] for i in self.labels)

    def __eq__(self, other: object) -> bool:
        """Name-insensitive, label-coding-insensitive equality: two datasets
        are equal when their cells and decoded label strings match (the
        integer id assigned to each class name is an encoding detail)."""
        if not isinstance(other, Dataset):
            return NotImplemented
        if (
            self.column_kinds != other.column_kinds
            or self.column_names != other.column_names
            or self.label_column != other.label_column
            or self.decoded_labels() != other.decoded_labels()
        ):
            return False
        for a, b, kind in zip(self.columns, other.columns, self.column_kinds):
            if kind is ColumnKind.NUMERIC:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True

    def __repr__(self) -> str:  # compact; the default would dump every cell
        return (
            f"Dataset(name={self.name!r}, rows={self.n_rows}, cols={self.n_cols}, "
            f"classes={len(self.label_names)})"
        )


def dataset_from_arrays(
    name: str,
    numeric: np.ndarray,
    labels: np.ndarray,
    categorical: list[list[str | None]] | None = None,
    label_names: tuple[str, ...] | None = None,
) -> Dataset:
    """Build a Dataset from a dense numeric matrix plus optional token columns."""
    numeric = np.asarray(numeric, dtype=np.float64)
    if numeric.ndim != 2:
        raise DataError("numeric must be a 2-D array")
    labels = np.asarray(labels, dtype=np.int64)
    columns: list[np.ndarray] = [numeric[:, j] for j in range(numeric.shape[1])]
    kinds = [ColumnKind.NUMERIC] * numeric.shape[1]
    names = [f"x{j}" for j in range(numeric.shape[1])]
    for k, col in enumerate(categorical or []):
        columns.append(np.asarray(col, dtype=object))
        kinds.append(ColumnKind.CATEGORICAL)
        names.append(f"c{k}")
    if label_names is None:
        label_names = tuple(f"k{i}" for i in range(int(labels.max()) + 1 if labels.size else 0))
    return Dataset(
        name=name,
        columns=tuple(columns),
        column_kinds=tuple(kinds),
        column_names=tuple(names),
        labels=labels,
        label_names=label_names,
    )


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    validation: Dataset
    split_seed: int
    train_fraction: float = 0.8


def split(ds: Dataset, seed: int, train_fraction: float = 0.8) -> SplitDataset:
    """Shuffle rows with a seeded PRNG; the first floor(fraction * n) go to train.

    Pure in (ds, seed, train_fraction). Raises DegenerateSplit when either
    side would be empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DegenerateSplit(f"train_fraction {train_fraction} outside (0, 1)")
    n = ds.n_rows
    n_train = int(math.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"{n} rows at fraction {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    train = ds.take_rows(perm[:n_train], name=f"{ds.name}[train]")
    validation = ds.take_rows(perm[n_train:], name=f"{ds.name}[validation]")
    return SplitDataset(train=train, validation=validation, split_seed=seed, train_fraction=train_fraction)


def load_csv(path: str | Path, label_column: str) -> Dataset:
    """Parse an RFC-4180 CSV with a header row into a Dataset.

    Empty cells are missing. A feature column is numeric iff every non-empty
    cell parses as a finite float, else categorical. Label tokens are mapped
    to dense ids by first appearance. Ragged rows and empty label cells raise
    UnparseableRow with the 0-based data row index.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row") from None
        if label_column not in header:
            raise MissingLabelColumn(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        if not feature_names:
            raise EmptyDataset(f"{path}: no feature columns besides the label")
        raw_features: list[list[str]] = []
        raw_labels: list[str] = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise UnparseableRow(i, f"expected {len(header)} fields, got {len(row)}")
            label_tok = row[label_idx]
            if label_tok == "":
                raise UnparseableRow(i, "empty label cell")
            raw_labels.append(label_tok)
            raw_features.append([c for j, c in enumerate(row) if j != label_idx])
    if not raw_labels:
        raise EmptyDataset(f"{path}: no data rows")

    label_names: list[str] = []
    label_ids: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, tok in enumerate(raw_labels):
        if tok not in label_ids:
            label_ids[tok] = len(label_names)
            label_names.append(tok)
        labels[i] = label_ids[tok]

    columns: list[np.ndarray] = []
    kinds: list[ColumnKind] = []
    for j in range(len(feature_names)):
        cells = [row[j] for row in raw_features]
        parsed = [(_parse_finite(c) if c != "" else math.nan) for c in cells]
        if all(c == "" or p is not None for c, p in zip(cells, parsed)):
            columns.append(np.array([math.nan if p is None else p for p in parsed], dtype=np.float64))
            kinds.append(ColumnKind.NUMERIC)
        else:
            columns.append(np.array([None if c == "" else c for c in cells], dtype=object))
            kinds.append(ColumnKind.CATEGORICAL)

    ds = Dataset(
        name=path.stem,
        columns=tuple(columns),
        column_kinds=tuple(kinds),
        column_names=tuple(feature_names),
        labels=labels,
        label_names=tuple(label_names),
        label_column=label_column,
    )
    ds.check()
    return ds


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a Dataset so that load_csv(path, ds.label_column) parses back equal.

    Missing cells become empty fields; numeric cells use the shortest
    round-tripping float representation.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*ds.column_names, ds.label_column])
        for i in range(ds.n_rows):
            row: list[str] = []
            for col, kind in zip(ds.columns, ds.column_kinds):
                v = col[i]
                if kind is ColumnKind.NUMERIC:
                    row.append("" if np.isnan(v) else repr(float(v)))
                else:
                    row.append("" if v is None else str(v))
            row.append(ds.label_names[ds.labels[i]])
            writer.writerow(row)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic synthetic classification dataset."""

    n_rows: int = 200
    n_numeric: int = 4
    n_categorical: int = 2
    n_classes: int = 2
    missing_rate: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 2 or self.n_numeric < 1 or self.n_classes < 2:
            raise DataError("n_rows >= 2, n_numeric >= 1 and n_classes >= 2 required")
        if self.n_categorical < 0:
            raise DataError("n_categorical must be >= 0")
        for rate in (self.missing_rate, self.outlier_rate):
            if not 0.0 <= rate < 1.0:
                raise DataError("rates must lie in [0, 1)")


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Generate a dataset whose learnability responds to preprocessing.

    Labels are the argmax of a seeded linear rule over latent normal features
    plus noise. Observed numeric columns are monotone distortions (identity,
    cubic, exp) of the latents at random scales and shifts, so scaling and
    rank transforms help a linear learner. Categorical columns are quantile
    bins of latent projections and carry label signal once encoded.

    With probability missing_rate (outlier_rate) a row gets one uniformly
    chosen numeric cell blanked (multiplied by 100). Expected missing cells:
    n_rows * missing_rate.
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_rows, spec.n_numeric

    latent = rng.standard_normal((n, d))
    class_weights = rng.standard_normal((d, spec.n_classes))
    logits = latent @ class_weights + 0.4 * rng.standard_normal((n, spec.n_classes))
    labels = np.argmax(logits, axis=1).astype(np.int64)
    if np.unique(labels).size < 2:
        labels[0] = (labels[0] + 1) % spec.n_classes  # keep two classes present

    cat_columns: list[np.ndarray] = []
    for _ in range(spec.n_categorical):
        direction = rng.standard_normal(d)
        score = latent @ direction
        edges = np.quantile(score, [0.25, 0.5, 0.75])
        bins = np.searchsorted(edges, score)
        cat_columns.append(np.array([f"lvl{b}" for b in bins], dtype=object))

    numeric = np.empty((n, d), dtype=np.float64)
    for j in range(d):
        scale = 10.0 ** rng.uniform(-2.0, 2.0)
        shift = rng.uniform(-3.0, 3.0) * scale
        base = latent[:, j]
        if j % 3 == 1:
            base = base**3
        elif j % 3 == 2:
            base = np.exp(base)
        numeric[:, j] = base * scale + shift

    outlier_rows = rng.random(n) < spec.outlier_rate
    outlier_cols = rng.integers(0, d, size=n)
    numeric[outlier_rows, outlier_cols[outlier_rows]] *= 100.0

    missing_rows = rng.random(n) < spec.missing_rate
    missing_cols = rng.integers(0, d, size=n)
    numeric[missing_rows, missing_cols[missing_rows]] = np.nan

    columns: list[np.ndarray] = [numeric[:, j] for j in range(d)]
    kinds = [ColumnKind.NUMERIC] * d
    names = [f"x{j}" for j in range(d)]
    for k, col in enumerate(cat_columns):
        columns.append(col)
        kinds.append(ColumnKind.CATEGORICAL)
        names.append(f"c{k}")

    ds = Dataset(
        name=f"synth-s{spec.seed}",
        columns=tuple(columns),
        column_kinds=tuple(kinds),
        column_names=tuple(names),
        labels=labels,
        label_names=tuple(f"k{i}" for i in range(spec.n_classes)),
    )
    ds.check()
    return ds
