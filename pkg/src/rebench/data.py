"""Annual proxy networks and target series: loading, validation, alignment,
standardization and holdout splits.

Missing proxy values are carried by an explicit boolean mask. Cells that are
not available hold 0.0 in the value matrix and must never be read without
consulting the mask.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AllMissingColumnError,
    DataError,
    DuplicateYearError,
    GapError,
    NonFiniteError,
    ParseError,
    ZeroVarianceError,
)

DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class YearAxis:
    """Consecutive integer years ``start_year .. start_year + length - 1``."""

    start_year: int
    length: int

    def __post_init__(self):
        if self.length < 2:
            raise DataError(f"year axis needs at least 2 years, got {self.length}")

    @property
    def end_year(self) -> int:
        return self.start_year + self.length - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.length)

    def contains(self, years) -> np.ndarray:
        years = np.asarray(years)
        return (years >= self.start_year) & (years <= self.end_year)

    def index_of(self, years) -> np.ndarray:
        years = np.asarray(years, dtype=int)
        if not np.all(self.contains(years)):
            bad = years[~self.contains(years)]
            raise DataError(f"years outside axis {self.start_year}..{self.end_year}: {bad[:5].tolist()}")
        return years - self.start_year

    @classmethod
    def spanning(cls, first: int, last: int) -> "YearAxis":
        return cls(int(first), int(last) - int(first) + 1)


@dataclass(frozen=True, eq=False)
class TargetSeries:
    axis: YearAxis
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.axis.length,):
            raise DataError(f"target has {values.size} values for an axis of length {self.axis.length}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("target contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def years(self) -> np.ndarray:
        return self.axis.years

    def at(self, years) -> np.ndarray:
        return self.values[self.axis.index_of(years)]

    def scaled(self, factor: float = 1.0, shift: float = 0.0) -> "TargetSeries":
        return TargetSeries(self.axis, self.values * factor + shift)


@dataclass(frozen=True)
class ProxySeries:
    id: str
    values: np.ndarray
    available: np.ndarray


@dataclass(frozen=True, eq=False)
class ProxyNetwork:
    """Year-by-proxy value matrix with a per-cell availability mask."""

    axis: YearAxis
    ids: tuple
    matrix: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        matrix = np.array(self.matrix, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if matrix.ndim != 2 or matrix.shape != (self.axis.length, len(ids)):
            raise DataError(
                f"matrix shape {matrix.shape} does not match ({self.axis.length}, {len(ids)})"
            )
        if mask.shape != matrix.shape:
            raise DataError("mask shape differs from matrix shape")
        if len(set(ids)) != len(ids):
            raise DataError("proxy ids are not unique")
        if any(not i for i in ids):
            raise DataError("proxy ids must be non-empty")
        if not np.all(np.isfinite(matrix[mask])):
            raise NonFiniteError("proxy network has non-finite available values")
        matrix[~mask] = 0.0
        matrix.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "mask", mask)

    @property
    def n_proxies(self) -> int:
        return len(self.ids)

    @property
    def years(self) -> np.ndarray:
        return self.axis.years

    @property
    def columns(self) -> list:
        return [
            ProxySeries(pid, self.matrix[:, j], self.mask[:, j])
            for j, pid in enumerate(self.ids)
        ]

    def column_index(self, ids: Iterable[str]) -> list:
        lookup = {pid: j for j, pid in enumerate(self.ids)}
        try:
            return [lookup[i] for i in ids]
        except KeyError as exc:
            raise DataError(f"unknown proxy id {exc.args[0]!r}") from None

    def select(self, ids: Sequence[str]) -> "ProxyNetwork":
        cols = self.column_index(ids)
        return ProxyNetwork(self.axis, tuple(ids), self.matrix[:, cols], self.mask[:, cols])

    def drop(self, ids: Iterable[str]) -> "ProxyNetwork":
        drop = set(ids)
        return self.select([i for i in self.ids if i not in drop])

    def restrict(self, axis: YearAxis) -> "ProxyNetwork":
        rows = self.axis.index_of(axis.years)
        return ProxyNetwork(axis, self.ids, self.matrix[rows], self.mask[rows])

    def rows(self, years) -> tuple:
        """Values and mask on the requested years, as ``(values, mask)``."""
        idx = self.axis.index_of(years)
        return self.matrix[idx], self.mask[idx]

    def complete_on(self, years) -> np.ndarray:
        """Boolean per column: available on every requested year."""
        return self.rows(years)[1].all(axis=0)


@dataclass(frozen=True)
class SplitSpec:
    holdout_start: int
    holdout_length: int = 30
    position: str = "interior"

    @property
    def holdout_end(self) -> int:
        return self.holdout_start + self.holdout_length - 1

    def holdout_years(self) -> np.ndarray:
        return np.arange(self.holdout_start, self.holdout_start + self.holdout_length)

    def calibration_years(self, axis: YearAxis) -> np.ndarray:
        years = axis.years
        keep = (years < self.holdout_start) | (years > self.holdout_end)
        return years[keep]


@dataclass(frozen=True)
class StandardizationParams:
    ids: tuple
    mean: np.ndarray
    sd: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.sd

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.sd + self.mean


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    return path, rows[0], rows[1:]


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise NonFiniteError(f"{where}: non-finite value {text!r}")
    return value


def _parse_years(raw_years, path):
    years = []
    for lineno, text in raw_years:
        try:
            years.append(int(text.strip()))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad year {text!r}") from None
    years = np.array(years, dtype=int)
    if len(np.unique(years)) != len(years):
        uniq, counts = np.unique(years, return_counts=True)
        raise DuplicateYearError(f"{path}: duplicate years {uniq[counts > 1].tolist()}")
    order = np.argsort(years, kind="stable")
    years = years[order]
    if len(years) < 2:
        raise DataError(f"{path}: need at least two years")
    gaps = np.nonzero(np.diff(years) != 1)[0]
    if gaps.size:
        g = gaps[0]
        raise GapError(f"{path}: non-consecutive years {years[g]} -> {years[g + 1]}")
    return YearAxis(int(years[0]), len(years)), order


def load_target(path) -> TargetSeries:
    path, header, rows = _read_rows(path)
    if [h.strip().lower() for h in header] != ["year", "value"]:
        raise ParseError(f"{path}: expected header 'year,value', got {','.join(header)!r}")
    raw_years, values = [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        raw_years.append((lineno, row[0]))
        values.append(_parse_float(row[1].strip(), f"{path}:{lineno}"))
    axis, order = _parse_years(raw_years, path)
    return TargetSeries(axis, np.array(values)[order])


def load_network(path) -> ProxyNetwork:
    path, header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    if not header or header[0].lower() != "year" or len(header) < 2:
        raise ParseError(f"{path}: header must be 'year,<id1>,<id2>,...'")
    ids = header[1:]
    if any(not i for i in ids):
        raise ParseError(f"{path}: empty proxy id in header")
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate proxy ids in header")
    width = len(header)
    raw_years = []
    matrix = np.zeros((len(rows), len(ids)))
    mask = np.zeros((len(rows), len(ids)), dtype=bool)
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        raw_years.append((lineno, row[0]))
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell:
                matrix[i, j] = _parse_float(cell, f"{path}:{lineno}:{ids[j]}")
                mask[i, j] = True
    axis, order = _parse_years(raw_years, path)
    matrix, mask = matrix[order], mask[order]
    empty = [ids[j] for j in np.nonzero(~mask.any(axis=0))[0]]
    if empty:
        raise AllMissingColumnError(f"{path}: columns with no data: {empty}")
    return ProxyNetwork(axis, tuple(ids), matrix, mask)


def write_target(target: TargetSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "value"])
        for year, value in zip(target.years, target.values):
            w.writerow([int(year), repr(float(value))])


def write_network(net: ProxyNetwork, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", *net.ids])
        for i, year in enumerate(net.years):
            cells = [repr(float(v)) if m else "" for v, m in zip(net.matrix[i], net.mask[i])]
            w.writerow([int(year), *cells])


# ---------------------------------------------------------------------------
# Alignment and preprocessing


def instrumental_overlap(net: ProxyNetwork, target: TargetSeries) -> YearAxis:
    """Years covered by both the network axis and the target series."""
    first = max(net.axis.start_year, target.axis.start_year)
    last = min(net.axis.end_year, target.axis.end_year)
    if last - first + 1 < 2:
        raise DataError(
            f"network ({net.axis.start_year}..{net.axis.end_year}) and target "
            f"({target.axis.start_year}..{target.axis.end_year}) overlap in fewer than 2 years"
        )
    return YearAxis.spanning(first, last)


def dedup_columns(net: ProxyNetwork, overlap: YearAxis) -> tuple:
    """Drop columns exactly collinear (|r| = 1) with an earlier column on ``overlap``.

    Correlations use the years where both columns are available. Returns the
    reduced network and the list of removed ids, in column order.
    """
    values, mask = net.rows(overlap.years)
    removed = []
    kept = []
    for j in range(net.n_proxies):
        duplicate = False
        for i in kept:
            both = mask[:, i] & mask[:, j]
            if both.sum() < 2:
                continue
            a = values[both, i] - values[both, i].mean()
            b = values[both, j] - values[both, j].mean()
            denom = math.sqrt(float(a @ a) * float(b @ b))
            if denom == 0.0:
                continue
            if 1.0 - abs(float(a @ b) / denom) <= DEDUP_TOL:
                duplicate = True
                break
        if duplicate:
            removed.append(net.ids[j])
        else:
            kept.append(j)
    if not removed:
        return net, []
    return net.drop(removed), removed


def standardize(net: ProxyNetwork, calib) -> tuple:
    """Scale each column to mean 0, sd 1 (divisor n - 1) over its available
    calibration years. Returns ``(network, StandardizationParams)``."""
    calib = np.asarray(calib, dtype=int)
    values, mask = net.rows(calib)
    counts = mask.sum(axis=0)
    short = [net.ids[j] for j in np.nonzero(counts < 2)[0]]
    if short:
        raise DataError(f"columns with fewer than 2 available calibration years: {short}")
    sums = np.where(mask, values, 0.0).sum(axis=0)
    mean = sums / counts
    dev = np.where(mask, values - mean, 0.0)
    sd = np.sqrt((dev * dev).sum(axis=0) / (counts - 1))
    flat = [net.ids[j] for j in np.nonzero(sd == 0.0)[0]]
    if flat:
        raise ZeroVarianceError(f"zero-variance columns on calibration years: {flat}")
    params = StandardizationParams(net.ids, mean, sd)
    scaled = np.where(net.mask, params.transform(net.matrix), 0.0)
    return ProxyNetwork(net.axis, net.ids, scaled, net.mask), params


def enumerate_splits(axis: YearAxis, holdout_length: int = 30) -> list:
    """Every contiguous holdout window of ``holdout_length`` years on ``axis``."""
    if holdout_length < 1:
        raise DataError(f"holdout length must be positive, got {holdout_length}")
    if holdout_length >= axis.length:
        raise DataError(
            f"holdout length {holdout_length} must be shorter than the axis ({axis.length} years)"
        )
    last_start = axis.end_year - holdout_length + 1
    splits = []
    for start in range(axis.start_year, last_start + 1):
        endpoint = start == axis.start_year or start == last_start
        splits.append(SplitSpec(start, holdout_length, "endpoint" if endpoint else "interior"))
    return splits
