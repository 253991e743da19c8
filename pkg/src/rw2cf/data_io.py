"""Monthly series ingestion, alignment, lagging and standardization."""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class DegenerateCovariateError(DataError):
    """A column has zero variance inside its fit window."""


@dataclass(frozen=True, order=True)
class CalendarMonth:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise DataError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> CalendarMonth:
        m = _MONTH_RE.match(text.strip())
        if m is None:
            raise DataError(f"malformed month {text!r}, expected YYYY-MM")
        year, month = int(m.group(1)), int(m.group(2))
        if not 1 <= month <= 12:
            raise DataError(f"malformed month {text!r}, month out of range")
        return cls(year, month)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + (self.month - 1)

    @classmethod
    def from_ordinal(cls, n: int) -> CalendarMonth:
        return cls(n // 12, n % 12 + 1)

    def shift(self, n: int) -> CalendarMonth:
        return CalendarMonth.from_ordinal(self.ordinal + n)

    def successor(self) -> CalendarMonth:
        return self.shift(1)

    def __sub__(self, other: CalendarMonth) -> int:
        return self.ordinal - other.ordinal

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(start: CalendarMonth, n: int) -> list[CalendarMonth]:
    return [start.shift(i) for i in range(n)]


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MonthlySeries:
    """Contiguous monthly values starting at ``start``; NaN marks a missing month."""

    name: str
    start: CalendarMonth
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or len(self.values) < 1:
            raise DataError(f"series {self.name!r} must be a non-empty vector")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def months(self) -> list[CalendarMonth]:
        return month_range(self.start, len(self))

    @property
    def end(self) -> CalendarMonth:
        return self.start.shift(len(self) - 1)

    def at(self, month: CalendarMonth) -> float:
        i = month - self.start
        if not 0 <= i < len(self):
            return math.nan
        return float(self.values[i])


@dataclass(frozen=True)
class Dataset:
    outcome: MonthlySeries
    covariates: tuple[MonthlySeries, ...] = ()
    label: str = ""
    gaps: tuple[CalendarMonth, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "gaps", tuple(self.gaps))
        for s in self.covariates:
            if s.start != self.outcome.start or len(s) != len(self.outcome):
                raise DataError(f"series {s.name!r} is not aligned with outcome {self.outcome.name!r}")
        names = self.names
        if len(set(names)) != len(names):
            raise DataError(f"duplicate series names: {names}")

    @property
    def names(self) -> list[str]:
        return [self.outcome.name] + [s.name for s in self.covariates]

    @property
    def start(self) -> CalendarMonth:
        return self.outcome.start

    @property
    def end(self) -> CalendarMonth:
        return self.outcome.end

    @property
    def months(self) -> list[CalendarMonth]:
        return self.outcome.months

    def __len__(self) -> int:
        return len(self.outcome)

    def get(self, name: str) -> MonthlySeries:
        for s in (self.outcome, *self.covariates):
            if s.name == name:
                return s
        raise DataError(f"no column named {name!r}; available: {self.names}")

    def index_of(self, month: CalendarMonth) -> int:
        i = month - self.start
        if not 0 <= i < len(self):
            raise DataError(f"month {month} outside data range {self.start}..{self.end}")
        return i

    def with_outcome(self, name: str) -> Dataset:
        """Return a view of the same columns with ``name`` promoted to outcome."""
        series = self.get(name)
        others = [s for s in (self.outcome, *self.covariates) if s.name != name]
        return Dataset(series, tuple(others), self.label, self.gaps)


def load_csv(path: str | os.PathLike, outcome: str | None = None, label: str | None = None) -> Dataset:
    """Read a ``month,<var1>,<var2>,...`` file.

    Rows are sorted by month; missing calendar months inside the range are
    kept as NaN rows and recorded in ``Dataset.gaps``. ``outcome`` defaults to
    the first variable column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0] != "month":
            raise DataError(f"{path}: first header column must be 'month', got {header[:1]}")
        variables = header[1:]
        if not variables:
            raise DataError(f"{path}: no variable columns")
        if len(set(variables)) != len(variables):
            raise DataError(f"{path}: duplicate column names in header")

        rows: dict[CalendarMonth, list[float]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                month = CalendarMonth.parse(row[0])
            except DataError as exc:
                raise DataError(f"{path}: row {lineno}, column 'month': {exc}") from None
            if month in rows:
                raise DataError(f"{path}: row {lineno}: duplicate month {month}")
            vals = []
            for name, cell in zip(variables, row[1:]):
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {name!r}: non-numeric value {cell!r}") from None
            rows[month] = vals

    if not rows:
        raise DataError(f"{path}: no data rows")
    first, last = min(rows), max(rows)
    n = last - first + 1
    table = np.full((n, len(variables)), np.nan)
    gaps = []
    for i, m in enumerate(month_range(first, n)):
        if m in rows:
            table[i] = rows[m]
        else:
            gaps.append(m)

    series = [MonthlySeries(name, first, table[:, j]) for j, name in enumerate(variables)]
    ds = Dataset(series[0], tuple(series[1:]), label if label is not None else path.stem, tuple(gaps))
    if outcome is not None and outcome != ds.outcome.name:
        ds = ds.with_outcome(outcome)
    return ds


def format_value(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write ``dataset`` in the ingestion format; values round-trip exactly."""
    cols = [dataset.outcome, *dataset.covariates]
    lines = [",".join(["month"] + [c.name for c in cols])]
    for i, m in enumerate(dataset.months):
        lines.append(",".join([str(m)] + [format_value(c.values[i]) for c in cols]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with tmp.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def build_lag(series: MonthlySeries, k: int) -> MonthlySeries:
    if k < 1:
        raise ValueError(f"lag must be >= 1, got {k}")
    out = np.full(len(series), np.nan)
    out[k:] = series.values[:-k] if k < len(series) else []
    return MonthlySeries(f"{series.name}_lag{k}", series.start, out)


@dataclass(frozen=True)
class ScalerParams:
    mean: float
    sd: float
    fit_window: tuple[CalendarMonth, CalendarMonth] | None = None

    def __post_init__(self):
        if not self.sd > 0:
            raise DegenerateCovariateError(f"scaler sd must be > 0, got {self.sd}")

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def to_dict(self) -> dict:
        window = None if self.fit_window is None else [str(m) for m in self.fit_window]
        return {"mean": self.mean, "sd": self.sd, "fit_window": window}


def standardize(values: Sequence[float], fit_window=None) -> tuple[np.ndarray, ScalerParams]:
    """Center and scale by the sample (n-1) standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise DataError("standardize needs at least two values")
    if np.isnan(x).any():
        raise DataError("standardize window contains missing values")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    if not sd > 0 or sd <= 1e-14 * max(1.0, abs(mean)):
        raise DegenerateCovariateError("zero variance in standardization window")
    scaler = ScalerParams(mean, sd, fit_window)
    return scaler.transform(x), scaler


def destandardize(values, scaler: ScalerParams) -> np.ndarray:
    return np.asarray(values, dtype=float) * scaler.sd + scaler.mean


@dataclass(frozen=True)
class PreparedModelInput:
    """Model-ready arrays over the latent field's ``T`` months.

    ``mask[t]`` marks months contributing to the likelihood. Rows outside the
    mask may hold NaN; excluded (held-out) months keep their covariates so
    they can be predicted.
    """

    months: tuple[CalendarMonth, ...]
    y: np.ndarray
    X: np.ndarray
    lag12: np.ndarray
    mask: np.ndarray
    covariate_names: tuple[str, ...]
    use_lag12: bool = True
    outcome_scaler: ScalerParams | None = None
    covariate_scalers: tuple[ScalerParams, ...] = ()
    outcome_name: str = "y"

    def __post_init__(self):
        for name in ("y", "X", "lag12"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "months", tuple(self.months))
        T = len(self.months)
        if self.y.shape != (T,) or self.lag12.shape != (T,) or self.mask.shape != (T,):
            raise DataError("y, lag12 and mask must all have length T")
        if self.X.ndim != 2 or self.X.shape != (T, len(self.covariate_names)):
            raise DataError(f"X must be T x k, got {self.X.shape}")
        w = self.window
        bad = ~np.isfinite(self.design[w]).all(axis=1) | ~np.isfinite(self.y[w])
        if bad.any():
            raise DataError(f"missing values inside likelihood window at {self.months[w[bad][0]]}")

    @property
    def T(self) -> int:
        return len(self.months)

    @property
    def k(self) -> int:
        return len(self.covariate_names)

    @cached_property
    def window(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def n(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def design(self) -> np.ndarray:
        """``[1 | X | lag12]`` over all T rows; the lag column only when enabled."""
        cols = [np.ones((self.T, 1)), self.X]
        if self.use_lag12:
            cols.append(self.lag12[:, None])
        return np.hstack(cols)

    @property
    def coef_names(self) -> list[str]:
        return ["beta0", *self.covariate_names] + (["lag12"] if self.use_lag12 else [])


def _fit_window(months: Sequence[CalendarMonth], idx: np.ndarray):
    return (months[idx[0]], months[idx[-1]]) if len(idx) else None


def prepare(
    dataset: Dataset,
    config,
    train_end: CalendarMonth,
    exclude: Iterable[CalendarMonth] = (),
) -> PreparedModelInput:
    """Build the model input for months ``dataset.start .. train_end``.

    Scalers are fitted on training months only (those up to ``train_end``
    and not in ``exclude``). The likelihood starts at month ``lag + 1`` when
    the lag term is used.
    """
    lag = 12
    T = dataset.index_of(train_end) + 1
    start_t = lag if config.use_lag12 else 0
    if T <= start_t:
        raise DataError(f"train_end {train_end} leaves no months after the first {lag} needed for the lag")
    months = dataset.months[:T]
    excluded = np.zeros(T, dtype=bool)
    for m in exclude:
        i = m - dataset.start
        if 0 <= i < T:
            excluded[i] = True
    train = ~excluded

    y_raw = dataset.outcome.values[:T]
    lag_raw = build_lag(dataset.outcome, lag).values[:T]

    scaler = None
    y, lag12 = y_raw.copy(), lag_raw.copy()
    if config.standardize_outcome:
        fit_idx = np.flatnonzero(train & np.isfinite(y_raw))
        _, scaler = standardize(y_raw[fit_idx], _fit_window(months, fit_idx))
        y, lag12 = scaler.transform(y_raw), scaler.transform(lag_raw)

    names = tuple(config.covariate_names)
    X = np.empty((T, len(names)))
    scalers = []
    for j, name in enumerate(names):
        raw = dataset.get(name).values[:T]
        fit_idx = np.flatnonzero(train & np.isfinite(raw))
        try:
            _, sc = standardize(raw[fit_idx], _fit_window(months, fit_idx))
        except DegenerateCovariateError:
            raise DegenerateCovariateError(f"covariate {name!r} has zero variance in the training window") from None
        X[:, j] = sc.transform(raw)
        scalers.append(sc)

    mask = train.copy()
    mask[:start_t] = False
    mask &= np.isfinite(y)
    if config.use_lag12:
        mask &= np.isfinite(lag12)
    w = np.flatnonzero(mask)
    if len(w) == 0:
        raise DataError("likelihood window is empty")
    missing = ~np.isfinite(X[w]).all(axis=1)
    if missing.any():
        raise DataError(f"covariate missing inside likelihood window at {months[w[missing][0]]}")

    return PreparedModelInput(
        months=months,
        y=y,
        X=X,
        lag12=lag12,
        mask=mask,
        covariate_names=names,
        use_lag12=config.use_lag12,
        outcome_scaler=scaler,
        covariate_scalers=tuple(scalers),
        outcome_name=dataset.outcome.name,
    )
