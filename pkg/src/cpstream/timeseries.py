"""Core data model for metric streams: immutable series plus CSV ingestion/export.

Indices in all public contracts are 1-based: sample ``n`` of a series of
length ``N`` lives at ``values[n - 1]`` and corresponds to time
``origin + (n - 1) * period``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import CsvFormatError

__all__ = [
    "TimeSeries",
    "SeriesSegment",
    "SeriesLike",
    "as_matrix",
    "load_csv",
    "save_csv",
    "sample_mean",
]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An ordered block of N d-dimensional samples of one monitored metric.

    ``values`` is an (N, d) float matrix, one row per sample in time order.
    The array is frozen at construction; the series is safe to share across
    threads. ``period`` is metadata only (duration covered by one sample)
    and has no effect on any statistic.
    """

    values: np.ndarray
    period: float = 1.0
    label: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"series must be a non-empty N x d matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series values must all be finite (no NaN/Inf)")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def segment(self, lo: int, hi: int) -> "SeriesSegment":
        """Inclusive 1-based window [lo, hi] of this series."""
        return SeriesSegment(self, lo, hi)

    def column(self, dim: int = 1) -> np.ndarray:
        """One dimension of the series as a flat array (``dim`` is 1-based)."""
        if not 1 <= dim <= self.dim:
            raise ValueError(f"dimension {dim} out of range 1..{self.dim}")
        return self.values[:, dim - 1]


@dataclass(frozen=True, eq=False)
class SeriesSegment:
    """A contiguous 1-based inclusive slice [lo, hi] of a parent series."""

    parent: TimeSeries = field(repr=False)
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not (1 <= self.lo <= self.hi <= self.parent.n_samples):
            raise ValueError(
                f"segment bounds [{self.lo}, {self.hi}] invalid for series of "
                f"length {self.parent.n_samples}"
            )

    @property
    def values(self) -> np.ndarray:
        return self.parent.values[self.lo - 1 : self.hi]

    @property
    def n_samples(self) -> int:
        return self.hi - self.lo + 1

    @property
    def dim(self) -> int:
        return self.parent.dim


SeriesLike = Union[TimeSeries, SeriesSegment, np.ndarray, Sequence]


def as_matrix(s: SeriesLike) -> np.ndarray:
    """The (N, d) sample matrix behind a series, segment, or plain array."""
    if isinstance(s, (TimeSeries, SeriesSegment)):
        return s.values
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def _parse_cell(text: str) -> float:
    value = float(text)
    if not np.isfinite(value):
        raise ValueError("non-finite value")
    return value


def _is_numeric_row(row: list[str]) -> bool:
    if not row:
        return False
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return False
    return True


def load_csv(
    path: str | Path,
    columns: Sequence[int] | None = None,
    period: float = 1.0,
    label: str | None = None,
) -> TimeSeries:
    """Read a comma-separated file into a TimeSeries.

    ``columns`` selects 1-based column indices (in the given order); ``None``
    takes every column. A single header row is auto-detected: if any cell of
    the first row fails to parse as a number, that row is skipped. Missing or
    non-numeric cells are rejected, never imputed.

    Raises:
        CsvFormatError: unreadable file, empty selection, or a non-numeric
            cell (the message names the offending file row and column).
    """
    path = Path(path)
    if columns is not None and len(columns) == 0:
        raise CsvFormatError("empty column selection")
    try:
        with path.open(newline="") as fh:
            raw = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc}") from exc
    if not raw:
        raise CsvFormatError(f"{path}: no data rows")

    start = 0 if _is_numeric_row(raw[0]) else 1
    if start == 1 and len(raw) == 1:
        raise CsvFormatError(f"{path}: header only, no data rows")

    if columns is None:
        columns = list(range(1, len(raw[start]) + 1))

    rows = []
    for file_row, record in enumerate(raw[start:], start=start + 1):
        point = []
        for col in columns:
            if not 1 <= col <= len(record):
                raise CsvFormatError(f"{path}: row {file_row} has no column {col}")
            try:
                point.append(_parse_cell(record[col - 1]))
            except ValueError:
                raise CsvFormatError(
                    f"{path}: non-numeric value {record[col - 1]!r} at row {file_row}, "
                    f"column {col}"
                ) from None
        rows.append(point)

    return TimeSeries(np.array(rows), period=period, label=label if label is not None else path.stem)


def save_csv(s: TimeSeries | SeriesSegment, path: str | Path) -> None:
    """Write a series as CSV with header ``t,x1..xd``.

    Values are written with shortest round-trip formatting, so reading the
    file back reproduces them bit-exactly.
    """
    mat = as_matrix(s)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{j}" for j in range(1, mat.shape[1] + 1)])
        for n, row in enumerate(mat, start=1):
            writer.writerow([n] + [repr(float(v)) for v in row])


def sample_mean(s: SeriesLike) -> np.ndarray:
    """Arithmetic mean per dimension, as a length-d vector."""
    mat = as_matrix(s)
    if mat.shape[0] < 1:
        raise ValueError("cannot average an empty series")
    return mat.mean(axis=0)
