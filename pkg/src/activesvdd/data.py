"""Dataset ingestion, standardization, and synthetic data generation.

CSV layout: UTF-8, comma separated, one header row. The label column holds
0 (normal) or 1 (abnormal). Categorical columns are expanded into indicator
columns named ``<col>=<value>``; all remaining columns must parse as finite
floats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "ScalerParams",
    "load_csv",
    "save_csv",
    "fit_standardizer",
    "apply_standardizer",
    "standardize",
    "generate_synthetic",
]

# Columns whose population std falls below this are treated as constant.
DEGENERATE_STD = 1e-12


class DataError(Exception):
    """A dataset file or matrix violates the ingestion contract."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class Dataset:
    """Feature matrix plus hidden ground-truth labels.

    Labels exist for the simulated oracle and the evaluator only. Training
    code should consume ``features`` and never read ``labels``.
    """

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    feature_names: list[str] | None = None

    def __post_init__(self) -> None:
        f = np.array(self.features, dtype=np.float64)
        if f.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if f.shape[0] == 0:
            raise DataError("dataset has no rows")
        if f.shape[1] == 0:
            raise DataError("dataset has no feature columns")
        if not np.all(np.isfinite(f)):
            raise DataError("features contain non-finite values")
        y = np.asarray(self.labels)
        if y.shape != (f.shape[0],):
            raise DataError(
                f"labels length {y.shape} does not match {f.shape[0]} rows"
            )
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must hold only 0 or 1")
        y = y.astype(np.int64)
        if int(y.sum()) == f.shape[0]:
            raise DataError("dataset contains no normal samples")
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(f.shape[1])]
        elif len(self.feature_names) != f.shape[1]:
            raise DataError("feature_names length does not match column count")
        f.setflags(write=False)
        y.setflags(write=False)
        self.features = f
        self.labels = y

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def anomaly_ratio(self) -> float:
        return float(self.labels.sum() / self.n)


@dataclass
class ScalerParams:
    """Per-column location/scale learned from a dataset."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("scaler mean/std must be 1-d and equal length")
        if not np.all(self.std > 0):
            raise DataError("scaler std entries must be positive")


def load_csv(path, label_column: str, categorical_columns=()) -> Dataset:
    """Parse a labeled CSV file into a Dataset.

    Categorical columns are replaced in place by one indicator column per
    distinct value (sorted for stable naming). Any parse problem raises
    DataError naming the offending data row and column.
    """
    p = Path(path)
    if not p.is_file():
        raise DataError(f"dataset file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{p}: missing header row") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{p}: duplicate header column(s): {', '.join(dupes)}")
        if label_column not in header:
            raise DataError(f"{p}: label column '{label_column}' not in header")
        for c in categorical_columns:
            if c not in header:
                raise DataError(f"{p}: categorical column '{c}' not in header")
            if c == label_column:
                raise DataError(f"{p}: label column cannot be categorical")
        rows = list(reader)
    # csv may emit a trailing empty record for a final newline
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{p}: no data rows")

    n = len(rows)
    width = len(header)
    label_pos = header.index(label_column)
    cat_pos = {header.index(c) for c in categorical_columns}
    labels = np.empty(n, dtype=np.int64)
    numeric: dict[int, np.ndarray] = {
        j: np.empty(n, dtype=np.float64)
        for j in range(width)
        if j != label_pos and j not in cat_pos
    }
    cat_cells: dict[int, list[str]] = {j: [] for j in cat_pos}

    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DataError(
                f"{p}: data row {i} has {len(row)} cells, expected {width}"
            )
        for j, cell in enumerate(row):
            name = header[j]
            if j == label_pos:
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{p}: label column '{name}' must hold only 0 or 1; "
                        f"found {cell!r} at data row {i}"
                    ) from None
                if v not in (0.0, 1.0):
                    raise DataError(
                        f"{p}: label column '{name}' must hold only 0 or 1; "
                        f"found {cell!r} at data row {i}"
                    )
                labels[i - 1] = int(v)
            elif j in cat_pos:
                cat_cells[j].append(cell.strip())
            else:
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{p}: non-numeric value {cell!r} in column '{name}' "
                        f"at data row {i}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{p}: non-finite value {cell!r} in column '{name}' "
                        f"at data row {i}"
                    )
                numeric[j][i - 1] = v

    columns: list[np.ndarray] = []
    names: list[str] = []
    for j, name in enumerate(header):
        if j == label_pos:
            continue
        if j in cat_pos:
            values = sorted(set(cat_cells[j]))
            for val in values:
                names.append(f"{name}={val}")
                columns.append(
                    np.array(
                        [1.0 if cell == val else 0.0 for cell in cat_cells[j]],
                        dtype=np.float64,
                    )
                )
        else:
            names.append(name)
            columns.append(numeric[j])
    if not columns:
        raise DataError(f"{p}: no feature columns besides the label")
    features = np.column_stack(columns)
    return Dataset(features, labels, name=p.stem, feature_names=names)


def save_csv(dataset: Dataset, path) -> Path:
    """Write a Dataset as CSV; feature values keep full float precision."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(dataset.feature_names) + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [str(int(label))])
    return p


def fit_standardizer(dataset: Dataset) -> ScalerParams:
    """Per-column mean and population std; degenerate columns get std 1."""
    f = dataset.features
    mean = f.mean(axis=0)
    std = f.std(axis=0)
    std = np.where(std < DEGENERATE_STD, 1.0, std)
    return ScalerParams(mean=mean, std=std)


def apply_standardizer(dataset: Dataset, scaler: ScalerParams) -> Dataset:
    if scaler.mean.shape[0] != dataset.d:
        raise DataError(
            f"scaler dimension {scaler.mean.shape[0]} does not match d={dataset.d}"
        )
    features = (dataset.features - scaler.mean) / scaler.std
    return Dataset(
        features,
        dataset.labels,
        name=dataset.name,
        feature_names=list(dataset.feature_names),
    )


def standardize(dataset: Dataset) -> Dataset:
    """Fit on the full dataset and apply; the transductive default."""
    return apply_standardizer(dataset, fit_standardizer(dataset))


def generate_synthetic(n: int, d: int, anomaly_ratio: float, seed: int) -> Dataset:
    """Mixture of a unit Gaussian at the origin and a far spherical shell.

    Normal rows are standard Gaussian. Abnormal rows have a uniformly random
    direction and a norm drawn uniformly from [4, 6], so they sit well
    outside the bulk of the normal cloud before standardization. Row order
    is a seeded shuffle of the two blocks.
    """
    if n < 1 or d < 1:
        raise DataError("n and d must be positive")
    if not (0.0 < anomaly_ratio < 0.5):
        raise DataError("anomaly_ratio must lie in (0, 0.5)")
    if n * anomaly_ratio < 1.0:
        raise DataError("n * anomaly_ratio must be at least 1")
    rng = np.random.default_rng(seed)
    n_abnormal = round_half_up(n * anomaly_ratio)
    n_normal = n - n_abnormal
    normal = rng.standard_normal((n_normal, d))
    directions = rng.standard_normal((n_abnormal, d))
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0.0):
        # a zero draw is essentially impossible; pin it to the first axis
        zero = norms == 0.0
        directions[zero, 0] = 1.0
        norms = np.linalg.norm(directions, axis=1)
    radii = rng.uniform(4.0, 6.0, size=n_abnormal)
    abnormal = directions / norms[:, None] * radii[:, None]
    features = np.vstack([normal, abnormal])
    labels = np.concatenate(
        [np.zeros(n_normal, dtype=np.int64), np.ones(n_abnormal, dtype=np.int64)]
    )
    perm = rng.permutation(n)
    return Dataset(
        features[perm],
        labels[perm],
        name=f"synthetic_{n}x{d}",
        feature_names=[f"x{j + 1}" for j in range(d)],
    )
