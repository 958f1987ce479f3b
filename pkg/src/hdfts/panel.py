"""Functional panel data model, CSV ingestion, transforms and centering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, IngestError, InsufficientDataError, ParseError

CSV_COLUMNS = ("section", "period", "point", "value")


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoidal quadrature weights for an increasing abscissa vector."""
    points = np.asarray(points, dtype=float)
    d = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Shared evaluation grid ``u_1 < ... < u_J`` with trapezoid weights."""

    points: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise ConfigError("grid needs at least two points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise ConfigError("grid points must be finite and strictly increasing")
        pts.setflags(write=False)
        w = trapezoid_weights(pts)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, start: float, stop: float, num: int) -> "Grid":
        return cls(np.linspace(start, stop, num))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    @property
    def length(self) -> float:
        return float(self.points[-1] - self.points[0])

    def integrate(self, values, axis: int = -1) -> np.ndarray:
        """Integrate sampled curves over the grid along ``axis``."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(np.moveaxis(values, axis, -1), self.weights, axes=([-1], [0]))

    def inner(self, f, g) -> np.ndarray:
        """L2 inner product of curves along the last axis."""
        return self.integrate(np.asarray(f) * np.asarray(g))

    def gram(self, curves) -> np.ndarray:
        """Quadrature Gram matrix of a stack of curves ``[m, J]``."""
        curves = np.atleast_2d(curves)
        return (curves * self.weights) @ curves.T


@dataclass(frozen=True, eq=False)
class FunctionalPanel:
    """N cross-sections observed over T periods on a shared grid.

    ``values`` has shape ``(N, T, J)``.
    """

    values: np.ndarray
    grid: Grid
    section_ids: tuple
    period_ids: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3:
            raise ConfigError(f"panel values must be 3-d (N, T, J), got shape {values.shape}")
        n, t, j = values.shape
        if j != len(self.grid):
            raise ConfigError(f"panel has {j} grid values but grid has {len(self.grid)} points")
        if not np.all(np.isfinite(values)):
            raise DomainError("panel contains non-finite values")
        sections = tuple(self.section_ids)
        periods = tuple(self.period_ids)
        if len(sections) != n or len(periods) != t:
            raise ConfigError("section/period labels do not match panel shape")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "section_ids", sections)
        object.__setattr__(self, "period_ids", periods)

    @classmethod
    def from_array(cls, values, grid=None, section_ids=None, period_ids=None) -> "FunctionalPanel":
        values = np.asarray(values, dtype=float)
        n, t, j = values.shape
        if grid is None:
            grid = Grid.uniform(0.0, 1.0, j)
        elif not isinstance(grid, Grid):
            grid = Grid(grid)
        if section_ids is None:
            section_ids = tuple(range(1, n + 1))
        if period_ids is None:
            period_ids = tuple(range(1, t + 1))
        return cls(values, grid, tuple(section_ids), tuple(period_ids))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def n_sections(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    def head(self, n_periods: int) -> "FunctionalPanel":
        """Panel restricted to the first ``n_periods`` periods."""
        return FunctionalPanel(self.values[:, :n_periods], self.grid, self.section_ids,
                               self.period_ids[:n_periods])

    def with_values(self, values) -> "FunctionalPanel":
        return FunctionalPanel(values, self.grid, self.section_ids, self.period_ids)


@dataclass(frozen=True, eq=False)
class CenteredPanel:
    centered: np.ndarray
    means: np.ndarray
    grid: Grid

    @property
    def n_periods(self) -> int:
        return self.centered.shape[1]


def parse_label(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def label_sort_key(label):
    # numbers before strings; numbers compared numerically
    if isinstance(label, (int, float)):
        return (0, float(label), "")
    return (1, 0.0, str(label))


def format_number(x) -> str:
    """Shortest round-trip text for a float; integral values lose the '.0'."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def load_panel_csv(path, schema: Mapping[str, str] | None = None) -> FunctionalPanel:
    """Read a long-format CSV (``section,period,point,value``) into a panel.

    Parameters
    ----------
    path : path-like
        CSV file, UTF-8, with a header row.
    schema : mapping, optional
        Maps the logical column names ``section``, ``period``, ``point`` and
        ``value`` to the header names actually used in the file.

    Raises
    ------
    ParseError
        A value or grid point is not numeric (the 1-based file line is named).
    IngestError
        Required columns are absent, a cell is duplicated, or a
        (section, period, point) cell is missing.
    """
    schema = dict(zip(CSV_COLUMNS, CSV_COLUMNS)) | dict(schema or {})
    cells: dict = {}
    sections, periods, points = set(), set(), set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [schema[c] for c in CSV_COLUMNS if schema[c] not in header]
        if missing_cols:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing_cols)}")
        for row in reader:
            line = reader.line_num
            sec = parse_label(row[schema["section"]].strip())
            per = parse_label(row[schema["period"]].strip())
            try:
                pt = float(row[schema["point"]])
            except (TypeError, ValueError):
                raise ParseError(f"line {line}: non-numeric point {row[schema['point']]!r}") from None
            try:
                val = float(row[schema["value"]])
            except (TypeError, ValueError):
                raise ParseError(f"line {line}: non-numeric value {row[schema['value']]!r}") from None
            if not math.isfinite(val):
                raise ParseError(f"line {line}: non-finite value {row[schema['value']]!r}")
            key = (sec, per, pt)
            if key in cells:
                raise IngestError(f"line {line}: duplicate cell section={sec} period={per} point={pt}")
            cells[key] = val
            sections.add(sec)
            periods.add(per)
            points.add(pt)
    if not cells:
        raise IngestError(f"{path}: no data rows")

    section_ids = sorted(sections, key=label_sort_key)
    period_ids = sorted(periods, key=label_sort_key)
    grid = Grid(sorted(points))
    values = np.empty((len(section_ids), len(period_ids), len(grid)))
    for a, sec in enumerate(section_ids):
        for b, per in enumerate(period_ids):
            for c, pt in enumerate(grid.points):
                try:
                    values[a, b, c] = cells[(sec, per, float(pt))]
                except KeyError:
                    raise IngestError(
                        f"missing cell section={sec} period={per} point={format_number(pt)}"
                    ) from None
    return FunctionalPanel(values, grid, tuple(section_ids), tuple(period_ids))


def write_panel_csv(panel: FunctionalPanel, path) -> None:
    """Write a panel in the long CSV format, sorted by (section, period, point)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        pts = [format_number(p) for p in panel.grid.points]
        for a, sec in enumerate(panel.section_ids):
            for b, per in enumerate(panel.period_ids):
                row_vals = panel.values[a, b]
                for c, pt in enumerate(pts):
                    writer.writerow((sec, per, pt, format_number(row_vals[c])))


def log_transform(panel: FunctionalPanel, floor: float = 1e-8) -> FunctionalPanel:
    """Natural log of the panel values, with values below ``floor`` raised to it."""
    if not floor > 0:
        raise ConfigError("log floor must be positive")
    if np.any(panel.values < 0):
        raise DomainError("log_transform requires nonnegative values")
    return panel.with_values(np.log(np.maximum(panel.values, floor)))


def smooth_panel(panel: FunctionalPanel, window: int = 3) -> FunctionalPanel:
    """Centered moving average over the grid, shrinking the window at the edges.

    Convenience pre-processing only; it is not part of the factor model.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError("smoothing window must be a positive odd integer")
    if window == 1:
        return panel
    half = window // 2
    v = panel.values
    j = v.shape[-1]
    csum = np.concatenate([np.zeros(v.shape[:-1] + (1,)), np.cumsum(v, axis=-1)], axis=-1)
    lo = np.clip(np.arange(j) - half, 0, j)
    hi = np.clip(np.arange(j) + half + 1, 0, j)
    out = (csum[..., hi] - csum[..., lo]) / (hi - lo)
    return panel.with_values(out)


def center_panel(panel: FunctionalPanel | np.ndarray, grid: Grid | None = None) -> CenteredPanel:
    """Subtract each section's time-mean curve."""
    if isinstance(panel, FunctionalPanel):
        values, grid = panel.values, panel.grid
    else:
        values = np.asarray(panel, dtype=float)
        grid = grid if grid is not None else Grid.uniform(0.0, 1.0, values.shape[-1])
    if values.shape[1] < 2:
        raise InsufficientDataError(f"centering needs at least 2 periods, got {values.shape[1]}")
    means = values.mean(axis=1)
    return CenteredPanel(values - means[:, None, :], means, grid)

