"""Forecast-quality metrics: quantile extraction, calibration curve and
error, CRPS of the quantile step CDF, 95% interval width/coverage and the
MSE of the median.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .forecast import DEFAULT_LEVELS, EnsembleForecast, QuantileForecast, check_levels

#: interpolation rule used for empirical quantiles (order statistics spaced 1/(M-1))
QUANTILE_METHOD = "linear"


def extract_quantiles(ensemble: Union[EnsembleForecast, np.ndarray], levels=DEFAULT_LEVELS) -> QuantileForecast:
    """Per-step empirical quantiles, linearly interpolated between order statistics."""
    samples = ensemble.samples if isinstance(ensemble, EnsembleForecast) else np.asarray(ensemble, dtype=float)
    if samples.ndim != 2 or samples.shape[1] < 2:
        raise ValueError("need an ensemble of at least 2 samples per step")
    levels = check_levels(levels)
    q = np.quantile(samples, levels, axis=1, method=QUANTILE_METHOD).T
    # guard against last-ulp inversions between neighbouring interpolants
    return QuantileForecast(np.maximum.accumulate(q, axis=1), levels)


def _as_forecast(forecast) -> QuantileForecast:
    if isinstance(forecast, QuantileForecast):
        return forecast
    if isinstance(forecast, EnsembleForecast):
        return extract_quantiles(forecast)
    raise TypeError(f"expected a QuantileForecast or EnsembleForecast, got {type(forecast).__name__}")


@dataclass(frozen=True)
class CalibrationCurve:
    levels: np.ndarray
    empirical: np.ndarray
    count: int

    def to_rows(self):
        return list(zip(self.levels.tolist(), self.empirical.tolist()))


def calibration_curve(forecast, truths) -> CalibrationCurve:
    """Fraction of observations at or below each predicted quantile."""
    fc = _as_forecast(forecast)
    y = np.asarray(truths, dtype=float).ravel()
    if y.size != len(fc):
        raise ValueError(f"{len(fc)} forecast steps but {y.size} observations")
    if y.size == 0:
        raise ValueError("empty evaluation set")
    emp = np.mean(y[:, None] <= fc.values, axis=0)
    return CalibrationCurve(fc.levels, emp, int(y.size))


def calibration_error(curve: CalibrationCurve, weights=None) -> float:
    """``sum_i w_i (tau_i - tau~_i)^2`` with unit weights by default."""
    d = curve.levels - curve.empirical
    if weights is None:
        return float(d @ d)
    w = np.asarray(weights, dtype=float)
    if w.shape != d.shape:
        raise ValueError(f"need {d.size} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return float(np.sum(w * d * d))


def crps_step(quantiles, levels, truth: float) -> float:
    """CRPS of the step CDF built from sorted quantiles.

    ``F = 0`` below the first quantile, ``F = tau_i`` between quantiles ``i``
    and ``i+1``, ``F = 1`` above the last one; the integral of
    ``(F(y) - H(y - truth))^2`` is evaluated piece by piece.
    """
    q = np.asarray(quantiles, dtype=float)
    tau = np.asarray(levels, dtype=float)
    if np.any(np.diff(q) < 0):
        raise ValueError("quantiles cross; sort them before scoring")
    x = float(truth)
    total = 0.0
    if x < q[0]:
        total += q[0] - x
    if x > q[-1]:
        total += x - q[-1]
    lo, hi = q[:-1], q[1:]
    F = tau[:-1]
    below = np.clip(np.minimum(hi, x) - lo, 0.0, None)  # part of each gap left of the truth
    above = np.clip(hi - np.maximum(lo, x), 0.0, None)
    total += float(np.sum(F * F * below + (1.0 - F) ** 2 * above))
    return total


def mcrps(forecast, truths) -> float:
    fc = _as_forecast(forecast)
    y = np.asarray(truths, dtype=float).ravel()
    if y.size != len(fc):
        raise ValueError(f"{len(fc)} forecast steps but {y.size} observations")
    q = fc.values
    tau = fc.levels
    if np.any(np.diff(q, axis=1) < 0):
        raise ValueError("quantiles cross; sort them before scoring")
    yy = y[:, None]
    tail = np.clip(q[:, 0] - y, 0, None) + np.clip(y - q[:, -1], 0, None)
    lo, hi = q[:, :-1], q[:, 1:]
    F = tau[:-1]
    below = np.clip(np.minimum(hi, yy) - lo, 0.0, None)
    above = np.clip(hi - np.maximum(lo, yy), 0.0, None)
    per_step = tail + np.sum(F * F * below + (1.0 - F) ** 2 * above, axis=1)
    return float(per_step.mean())


def interval_metrics(forecast, truths, lower: float = 0.025, upper: float = 0.975):
    """Mean width of ``[q_lower, q_upper]`` and the fraction of truths inside it."""
    fc = _as_forecast(forecast)
    y = np.asarray(truths, dtype=float).ravel()
    if y.size != len(fc):
        raise ValueError(f"{len(fc)} forecast steps but {y.size} observations")
    try:
        lo, hi = fc.at(lower), fc.at(upper)
    except KeyError as e:
        raise ValueError(f"interval levels ({lower}, {upper}) not in forecast levels") from e
    width = float(np.mean(hi - lo))
    coverage = float(np.mean((y >= lo) & (y <= hi)))
    return width, coverage


def mse_median(forecast, truths) -> float:
    fc = _as_forecast(forecast)
    y = np.asarray(truths, dtype=float).ravel()
    try:
        med = fc.median
    except KeyError as e:
        raise ValueError("forecast has no 0.5 level") from e
    if y.size != med.size:
        raise ValueError(f"{med.size} forecast steps but {y.size} observations")
    r = y - med
    return float(r @ r / r.size)


@dataclass
class MetricsReport:
    mse: float
    cal: float
    width95: float
    coverage95: float
    mcrps: float
    train_time: Optional[float] = None

    def to_dict(self, include_time: bool = True) -> dict:
        d = asdict(self)
        if not include_time:
            d.pop("train_time")
        return d


def evaluate(forecast, truths, train_time: Optional[float] = None) -> MetricsReport:
    fc = _as_forecast(forecast)
    width, cov = interval_metrics(fc, truths)
    rep = MetricsReport(
        mse=mse_median(fc, truths),
        cal=calibration_error(calibration_curve(fc, truths)),
        width95=width,
        coverage95=cov,
        mcrps=mcrps(fc, truths),
        train_time=train_time,
    )
    for k, v in rep.to_dict(include_time=False).items():
        if not math.isfinite(v):
            raise ValueError(f"metric {k} is not finite")
    return rep


def write_curves_csv(path, levels, before, after=None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "tau_before", "tau_after"])
        for i, t in enumerate(levels):
            w.writerow([repr(float(t)), repr(float(before[i])), "" if after is None else repr(float(after[i]))])


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))
