"""Univariate time-series ingestion, normalization, seasonal differencing
and train/calibration/test splitting.

All transforms are pure: they return new objects and never mutate their
inputs. Series values are stored as read-only float64 arrays.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """An ordered sequence of scalar observations.

    Attributes:
        values: 1-D float array, finite.
        step: sampling interval.
        name: identifier used in reports.
    """

    values: np.ndarray
    step: timedelta = timedelta(hours=1)
    name: str = "series"

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise ValueError(f"TimeSeries values must be 1-D, got shape {values.shape}")
        if values.size < 1:
            raise ValueError("TimeSeries must contain at least one value")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite value at index {bad}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values, name: Optional[str] = None) -> "TimeSeries":
        return TimeSeries(values, self.step, self.name if name is None else name)


@dataclass(frozen=True)
class NormStats:
    """Mean/std standardization constants.

    ``source`` records which split the statistics were estimated on; the
    experiment pipeline refuses anything other than ``"train"``.
    """

    mean: float
    std: float
    source: str = "train"

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)):
            raise ValueError(f"std must be positive and finite, got {self.std}")


@dataclass(frozen=True)
class SeasonalSpec:
    """Seasonal lag ``s`` and forecast horizon ``h`` (both in samples).

    ``h <= s`` is enforced so that reconstruction only ever adds back an
    already observed value.
    """

    s: int
    h: int

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"seasonal lag must be a positive integer, got {self.s}")
        if int(self.h) != self.h or self.h < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.h}")
        if self.h > self.s:
            raise ValueError(
                f"horizon h={self.h} exceeds seasonal lag s={self.s}; the reconstructed "
                "forecast would depend on another forecast"
            )


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    cal_frac: float = 0.15
    test_frac: float = 0.15

    def __post_init__(self):
        fracs = (self.train_frac, self.cal_frac, self.test_frac)
        if not 0 < self.train_frac < 1:
            raise ValueError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


# ---------------------------------------------------------------------------
# ingestion


def load_csv(
    path: Union[str, Path],
    column: Union[str, int] = 0,
    *,
    header: bool = True,
    step: Optional[timedelta] = None,
    time_column: Union[str, int, None] = None,
    name: Optional[str] = None,
) -> TimeSeries:
    """Read one numeric column of a CSV file into a :class:`TimeSeries`.

    Rows are numbered from 1 as they appear in the file (the header, when
    present, is row 1). Missing or non-numeric cells are rejected, not
    imputed.

    If ``time_column`` is given, the sampling step is inferred as the
    median difference of its ISO-8601 timestamps; otherwise ``step`` is
    used (default one hour).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))

    start = 0
    col_idx = column
    time_idx = time_column
    if header:
        if not rows:
            raise ValueError(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        col_idx = _resolve_column(names, column)
        if time_column is not None:
            time_idx = _resolve_column(names, time_column)
        start = 1
    elif isinstance(column, str) or isinstance(time_column, str):
        raise ValueError("column names require header=True")

    values = []
    stamps = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if col_idx >= len(row):
            raise ValueError(f"{path}: row {lineno} has no column {column!r}")
        cell = row[col_idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise ValueError(f"{path}: non-numeric value {cell!r} at row {lineno}") from None
        if not math.isfinite(v):
            raise ValueError(f"{path}: missing or non-finite value {cell!r} at row {lineno}")
        values.append(v)
        if time_idx is not None:
            stamps.append(datetime.fromisoformat(row[time_idx].strip()))

    if not values:
        raise ValueError(f"{path}: column {column!r} is empty")

    if stamps and len(stamps) > 1:
        diffs = sorted(b - a for a, b in zip(stamps[:-1], stamps[1:]))
        step = diffs[len(diffs) // 2]
    if step is None:
        step = timedelta(hours=1)
    return TimeSeries(np.asarray(values), step, name or f"{path.stem}:{column}")


def _resolve_column(names: Sequence[str], column: Union[str, int]) -> int:
    if isinstance(column, int):
        if not 0 <= column < len(names):
            raise ValueError(f"column index {column} out of range for header {names}")
        return column
    try:
        return names.index(column)
    except ValueError:
        raise ValueError(f"column {column!r} not found in header {names}") from None


def save_csv(series: TimeSeries, path: Union[str, Path], header: bool = True) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([series.name])
        for v in series.values:
            w.writerow([repr(float(v))])


def exclude_ranges(series: TimeSeries, ranges: Sequence[Tuple[int, int]]) -> TimeSeries:
    """Drop half-open index ranges ``[start, stop)`` and concatenate the rest."""
    keep = np.ones(len(series), dtype=bool)
    for start, stop in ranges:
        if not 0 <= start < stop <= len(series):
            raise ValueError(f"invalid exclusion range [{start}, {stop}) for length {len(series)}")
        keep[start:stop] = False
    if not keep.any():
        raise ValueError("exclusion ranges remove the whole series")
    return series.with_values(series.values[keep])


# ---------------------------------------------------------------------------
# normalization


def fit_normalizer(train: TimeSeries, tol: float = 1e-12, source: str = "train") -> NormStats:
    v = train.values
    if v.size < 2:
        raise ValueError("need at least 2 training values to estimate a std")
    std = float(np.std(v))
    if std <= tol:
        raise ValueError(f"zero-variance training series (std={std:.3g})")
    return NormStats(float(np.mean(v)), std, source)


def apply_normalizer(series: TimeSeries, stats: NormStats) -> TimeSeries:
    return series.with_values((series.values - stats.mean) / stats.std)


def invert_normalizer(series: TimeSeries, stats: NormStats) -> TimeSeries:
    return series.with_values(series.values * stats.std + stats.mean)


# ---------------------------------------------------------------------------
# seasonal differencing


def seasonal_difference(series: TimeSeries, spec: SeasonalSpec) -> TimeSeries:
    """``out[k] = x[k + s] - x[k]``; entry ``k`` belongs to time ``k + s``."""
    s = spec.s
    x = series.values
    if x.size <= s:
        raise ValueError(f"series of length {x.size} is too short for lag s={s}")
    return series.with_values(x[s:] - x[:-s], name=f"{series.name}-diff{s}")


def undifference(diff: TimeSeries, head: np.ndarray, spec: SeasonalSpec) -> TimeSeries:
    """Invert :func:`seasonal_difference` given the first ``s`` original values."""
    s = spec.s
    head = np.asarray(head, dtype=float)
    if head.size != s:
        raise ValueError(f"need exactly s={s} leading values, got {head.size}")
    out = np.empty(diff.values.size + s)
    out[:s] = head
    for k, d in enumerate(diff.values):
        out[k + s] = d + out[k]
    return diff.with_values(out)


def reconstruct_forecast(
    diff_forecast: np.ndarray,
    history: Union[TimeSeries, np.ndarray],
    target_index: np.ndarray,
    spec: SeasonalSpec,
) -> np.ndarray:
    """Add the seasonal term back onto a differenced forecast.

    Args:
        diff_forecast: (T,) or (T, M) array of forecasts of the differenced
            value at original time ``target_index[t]`` (samples or quantiles).
        history: the undifferenced series in the same scale as the forecast.
        target_index: original-time index ``t + h`` of each forecast row.
        spec: seasonal lag/horizon; ``h <= s`` is guaranteed by SeasonalSpec.

    Returns:
        Array shaped like ``diff_forecast`` holding ``x~_{t+h} + x_{t+h-s}``.
        Every column of a row is shifted by the same observed constant, so
        spreads are unchanged.
    """
    x = history.values if isinstance(history, TimeSeries) else np.asarray(history, dtype=float)
    f = np.asarray(diff_forecast, dtype=float)
    idx = np.asarray(target_index, dtype=int) - spec.s
    if f.shape[0] != idx.size:
        raise ValueError(f"forecast has {f.shape[0]} rows but {idx.size} target indices")
    if idx.size and (idx.min() < 0 or idx.max() >= x.size):
        raise ValueError("seasonal reference index falls outside the history")
    base = x[idx]
    return f + (base[:, None] if f.ndim == 2 else base)


# ---------------------------------------------------------------------------
# splitting


def split_sizes(n: int, spec: SplitSpec) -> Tuple[int, int, int]:
    """Train gets ``floor(train_frac * n)``; the rest is shared between
    calibration and test in proportion, any leftover sample going to test."""
    n_train = int(math.floor(spec.train_frac * n + 1e-9))
    rest = n - n_train
    n_cal = int(math.floor(rest * spec.cal_frac / (spec.cal_frac + spec.test_frac) + 1e-9))
    n_test = rest - n_cal
    if min(n_train, n_cal, n_test) < 1:
        raise ValueError(f"length {n} gives an empty split: {(n_train, n_cal, n_test)}")
    return n_train, n_cal, n_test


def split(series: TimeSeries, spec: SplitSpec = SplitSpec()) -> Tuple[TimeSeries, TimeSeries, TimeSeries]:
    n_train, n_cal, _ = split_sizes(len(series), spec)
    v = series.values
    b1, b2 = n_train, n_train + n_cal
    return (
        series.with_values(v[:b1], name=f"{series.name}[train]"),
        series.with_values(v[b1:b2], name=f"{series.name}[cal]"),
        series.with_values(v[b2:], name=f"{series.name}[test]"),
    )


# ---------------------------------------------------------------------------
# synthetic data


def synth_seasonal(
    length: int,
    period: int,
    trend: float = 0.0,
    noise_std: float = 0.0,
    seed: int = 0,
    amplitude: float = 1.0,
    step: timedelta = timedelta(days=1),
) -> TimeSeries:
    """Sinusoid of the given period plus a linear trend and Gaussian noise."""
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    if length <= 2 * period:
        raise ValueError(f"length {length} must exceed twice the period {period}")
    t = np.arange(length)
    x = amplitude * np.sin(2 * np.pi * t / period) + trend * t
    if noise_std > 0:
        x = x + noise_std * np.random.default_rng(seed).standard_normal(length)
    return TimeSeries(x, step, f"synth(p={period},seed={seed})")


# ---------------------------------------------------------------------------
# supervised pairs


@dataclass(frozen=True)
class SupervisedSet:
    """Aligned (state, target) pairs.

    ``target_index`` is the position of each target in the series the
    reservoir was driven with.
    """

    X: np.ndarray
    y: np.ndarray
    target_index: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.y.size

    def subset(self, mask) -> "SupervisedSet":
        return SupervisedSet(self.X[mask], self.y[mask], self.target_index[mask])


def make_supervised(states, targets, h: int) -> SupervisedSet:
    """Pair the state at input time ``t`` with the observation at ``t + h``.

    ``states`` is a StateSequence (its ``washout_dropped`` gives the input
    time of row 0) or a plain (T, N) array aligned with ``targets``.
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    S = getattr(states, "states", states)
    offset = getattr(states, "washout_dropped", 0)
    y = targets.values if isinstance(targets, TimeSeries) else np.asarray(targets, dtype=float)
    S = np.asarray(S)
    usable = min(S.shape[0], y.size - offset)
    n = usable - h
    if n < 1:
        raise ValueError(f"horizon h={h} leaves no pairs (usable length {usable})")
    idx = np.arange(n) + offset + h
    return SupervisedSet(S[:n], y[idx], idx)
