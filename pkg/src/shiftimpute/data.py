"""Data model: complete matrices, observedness masks, CSV ingestion/emission,
standardization, and per-column observed/missing row partitioning.

A mask is always a separate boolean matrix (True = observed); missing cells are
never encoded as sentinel values. CSV dialect: comma-separated, '.' decimal,
optional header row, empty field = missing, UTF-8.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataMatrix",
    "MaskMatrix",
    "MaskedDataset",
    "ColumnStats",
    "load_csv",
    "load_masked_csv",
    "save_csv",
    "save_masked_csv",
    "standardize",
    "destandardize",
    "partition_by_column",
]


@dataclass(frozen=True)
class DataMatrix:
    """An n x d matrix of finite reals plus column names.

    A complete matrix contains no NaN/inf. Requires n >= 1 and d >= 2.
    """

    values: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        n, d = values.shape
        if n < 1 or d < 2:
            raise ValueError(f"need n >= 1 and d >= 2, got shape ({n}, {d})")
        if len(self.column_names) != d:
            raise ValueError(
                f"{len(self.column_names)} column names for {d} columns"
            )
        if not np.all(np.isfinite(values)):
            k, j = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite entry at row {k}, column {j}")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MaskMatrix:
    """Boolean observedness matrix; True marks an observed cell.

    Every row must have at least one observed entry, and no column may be
    entirely missing (a column with at least one missing entry belongs to the
    imputed set and must retain observed entries to train on).
    """

    observed: np.ndarray

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=bool)
        object.__setattr__(self, "observed", observed)
        if observed.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {observed.shape}")
        rows_empty = ~observed.any(axis=1)
        if rows_empty.any():
            raise ValueError(
                f"row {int(np.argmax(rows_empty))} has no observed entries"
            )
        cols_empty = ~observed.any(axis=0)
        if cols_empty.any():
            raise ValueError(
                f"column {int(np.argmax(cols_empty))} is entirely missing"
            )

    def missing_columns(self) -> list[int]:
        """Indices of columns with at least one missing entry (the imputed set)."""
        return [int(j) for j in np.flatnonzero(~self.observed.all(axis=0))]

    def missing_count(self, j: int) -> int:
        return int((~self.observed[:, j]).sum())


@dataclass(frozen=True)
class MaskedDataset:
    """A data matrix, its observedness mask, and the current completion.

    ``data`` holds ground-truth values where available (placeholder zeros at
    missing cells when no truth exists, e.g. plain masked-CSV ingestion).
    ``completed`` always agrees with ``data`` on observed cells; engine updates
    only ever rewrite missing cells. Treat instances as immutable; the engine
    copies ``completed`` before mutating.
    """

    data: DataMatrix
    mask: MaskMatrix
    completed: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.mask.observed.shape != self.data.values.shape:
            raise ValueError(
                f"mask shape {self.mask.observed.shape} != data shape "
                f"{self.data.values.shape}"
            )
        completed = self.completed
        if completed is None:
            completed = self.data.values.copy()
        completed = np.asarray(completed, dtype=float)
        object.__setattr__(self, "completed", completed)
        if completed.shape != self.data.values.shape:
            raise ValueError("completed shape mismatch")
        obs = self.mask.observed
        if not np.array_equal(completed[obs], self.data.values[obs]):
            raise ValueError("completed disagrees with data on observed cells")

    def missing_columns(self) -> list[int]:
        return self.mask.missing_columns()

    def with_completed(self, completed: np.ndarray) -> "MaskedDataset":
        """Return a copy of this dataset carrying a new completion."""
        return MaskedDataset(self.data, self.mask, np.array(completed, dtype=float))


@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean and population standard deviation.

    A column with std 0 is constant; standardizing it yields all zeros, and the
    zero std is stored as-is (the scale used in either direction is then 1).
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean/std must be 1-D and the same length")
        if (std < 0).any():
            raise ValueError("negative std")

    @property
    def scale(self) -> np.ndarray:
        """Division-safe scale: 1.0 where the column is constant."""
        return np.where(self.std > 0, self.std, 1.0)


def _parse_cell(text: str, row: int, col: int, names=None) -> float:
    label = f"row {row}, column {names[col] if names else col}"
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"cannot parse {text!r} as a number at {label}") from None
    if not np.isfinite(value):
        raise ValueError(f"non-finite value {text!r} at {label}")
    return value


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [row for row in csv.reader(handle) if row]


def _split_header(rows, has_header):
    if not rows:
        raise ValueError("empty CSV file")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"ragged CSV: row {k} has {len(row)} cells, expected {width}")
    if has_header:
        names = tuple(cell.strip() for cell in rows[0])
        return names, rows[1:]
    return tuple(f"col{j}" for j in range(width)), rows


def load_csv(path, has_header: bool = True) -> DataMatrix:
    """Load a complete CSV: every cell must parse as a finite real."""
    names, body = _split_header(_read_rows(path), has_header)
    if not body:
        raise ValueError("CSV has a header but no data rows")
    values = np.empty((len(body), len(names)))
    for k, row in enumerate(body):
        for j, cell in enumerate(row):
            values[k, j] = _parse_cell(cell.strip(), k, j, names)
    return DataMatrix(values, names)


def load_masked_csv(path, has_header: bool = True) -> MaskedDataset:
    """Load a CSV where empty fields mark missing cells.

    Missing cells get a placeholder 0.0 in the data matrix (the mask is the
    source of truth). Rows with no observed entry are rejected.
    """
    names, body = _split_header(_read_rows(path), has_header)
    if not body:
        raise ValueError("CSV has a header but no data rows")
    values = np.zeros((len(body), len(names)))
    observed = np.zeros((len(body), len(names)), dtype=bool)
    for k, row in enumerate(body):
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                continue
            values[k, j] = _parse_cell(cell, k, j, names)
            observed[k, j] = True
        if not observed[k].any():
            raise ValueError(f"row {k} has every entry missing")
    return MaskedDataset(DataMatrix(values, names), MaskMatrix(observed))


def save_csv(matrix: DataMatrix, path, header: bool = True) -> None:
    """Write a complete matrix; floats use repr so a round trip is exact."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow(matrix.column_names)
        for row in matrix.values:
            writer.writerow([repr(float(v)) for v in row])


def save_masked_csv(ds: MaskedDataset, path, header: bool = True) -> None:
    """Write a masked dataset, emitting empty fields at missing cells."""
    obs = ds.mask.observed
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow(ds.data.column_names)
        for k, row in enumerate(ds.data.values):
            writer.writerow(
                [repr(float(v)) if obs[k, j] else "" for j, v in enumerate(row)]
            )


def column_stats(values: np.ndarray) -> ColumnStats:
    """Mean and population std per column of an array."""
    values = np.asarray(values, dtype=float)
    return ColumnStats(values.mean(axis=0), values.std(axis=0))


def standardize_values(values: np.ndarray, stats: ColumnStats | None = None):
    """Array-level standardization helper; returns (array, stats)."""
    values = np.asarray(values, dtype=float)
    if stats is None:
        stats = column_stats(values)
    elif stats.mean.shape[0] != values.shape[1]:
        raise ValueError(
            f"stats cover {stats.mean.shape[0]} columns, matrix has {values.shape[1]}"
        )
    return (values - stats.mean) / stats.scale, stats


def standardize(m: DataMatrix, stats: ColumnStats | None = None):
    """Standardize columns to mean 0, std 1 (constant columns to all zeros).

    Returns the standardized matrix and the stats used; pass the stats back to
    :func:`destandardize` to invert exactly.
    """
    scaled, stats = standardize_values(m.values, stats)
    return DataMatrix(scaled, m.column_names), stats


def destandardize(m: DataMatrix, stats: ColumnStats) -> DataMatrix:
    """Invert :func:`standardize` with the stats it returned."""
    if stats.mean.shape[0] != m.n_cols:
        raise ValueError("stats dimension mismatch")
    return DataMatrix(m.values * stats.scale + stats.mean, m.column_names)


def partition_by_column(ds: MaskedDataset, i: int):
    """Row indices where column ``i`` is observed and where it is missing.

    Both lists preserve original row order; together they partition the rows.
    """
    if not 0 <= i < ds.data.n_cols:
        raise IndexError(f"column {i} out of range for d={ds.data.n_cols}")
    col = ds.mask.observed[:, i]
    return np.flatnonzero(col), np.flatnonzero(~col)
