"""Post-hoc recalibration of sample-based forecasts.

A monotone map ``mu`` is fitted by isotonic regression of the empirical
levels on the nominal ones (held-out data), with ``mu(0) = 0`` and
``mu(1) = 1`` pinned. To recalibrate, the quantile reported at level
``alpha`` is re-read from the samples at level ``mu^-1(alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forecast import EnsembleForecast, QuantileForecast
from .metrics import CalibrationCurve


def isotonic_fit(x, y, w=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit (pool adjacent violators).

    ``x`` only determines the order of ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    order = np.argsort(x, kind="stable")
    ys, ws = y[order], w[order]
    vals, wts, counts = [], [], []
    for v, wt in zip(ys, ws):
        vals.append(v)
        wts.append(wt)
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            wsum = wts[-2] + wts[-1]
            v_new = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / wsum
            c_new = counts[-2] + counts[-1]
            del vals[-1], wts[-1], counts[-1]
            vals[-1], wts[-1], counts[-1] = v_new, wsum, c_new
    fitted = np.repeat(vals, counts)
    out = np.empty_like(fitted)
    out[order] = fitted
    return out


class RecalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationMap:
    """Piecewise-linear monotone map on [0, 1] through ``(knots_x, knots_y)``.

    ``source`` records the split the map was fitted on.
    """

    knots_x: np.ndarray
    knots_y: np.ndarray
    source: str = "calibration"

    def __call__(self, tau):
        return np.interp(tau, self.knots_x, self.knots_y)

    def inverse(self, alpha) -> np.ndarray:
        """Generalised inverse ``inf{tau : mu(tau) >= alpha}``."""
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        xs, ys = self.knots_x, self.knots_y
        out = np.empty_like(a)
        for i, al in enumerate(a):
            if al <= ys[0]:
                out[i] = xs[0]
                continue
            if al >= ys[-1]:
                out[i] = xs[int(np.searchsorted(ys, ys[-1], side="left"))]
                continue
            k = int(np.searchsorted(ys, al, side="left"))  # first knot with y >= al
            x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
            out[i] = x1 if y1 == y0 else x0 + (al - y0) * (x1 - x0) / (y1 - y0)
        return out if np.ndim(alpha) else out[0]

    def to_dict(self) -> dict:
        return {"knots_x": self.knots_x.tolist(), "knots_y": self.knots_y.tolist(), "source": self.source}


def fit_recalibrator(curve: CalibrationCurve, source: str = "calibration") -> CalibrationMap:
    tau = np.asarray(curve.levels, dtype=float)
    emp = np.asarray(curve.empirical, dtype=float)
    fitted = np.clip(isotonic_fit(tau, emp), 0.0, 1.0)
    xs = np.concatenate([[0.0], tau, [1.0]])
    ys = np.concatenate([[0.0], fitted, [1.0]])
    return CalibrationMap(xs, ys, source)


def recalibrated_levels(cmap: CalibrationMap, levels) -> np.ndarray:
    """Levels at which samples must be read so that the result is calibrated
    at the nominal ``levels``."""
    return np.clip(cmap.inverse(np.asarray(levels, dtype=float)), 0.0, 1.0)


def apply_recalibrator(cmap: CalibrationMap, forecast, levels=None) -> QuantileForecast:
    """Recompute quantiles of an ensemble at ``mu^-1(levels)``.

    The returned forecast is labelled with the nominal levels. Quantile-only
    forecasts cannot be recalibrated: the remapped levels were never predicted.
    """
    if isinstance(forecast, QuantileForecast):
        raise RecalibrationError("a quantile forecast has no samples to re-read; QR output is not recalibrated")
    if not isinstance(forecast, EnsembleForecast):
        raise TypeError(f"expected an EnsembleForecast, got {type(forecast).__name__}")
    from .forecast import DEFAULT_LEVELS

    nominal = DEFAULT_LEVELS if levels is None else np.asarray(levels, dtype=float)
    new = recalibrated_levels(cmap, nominal)
    q = np.quantile(forecast.samples, new, axis=1, method="linear").T
    return QuantileForecast(np.maximum.accumulate(q, axis=1), nominal)
