"""Forecast containers shared by every readout method."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _default_levels() -> np.ndarray:
    inner = np.round(np.arange(1, 40) * 0.025, 10)  # 0.025 ... 0.975
    return np.concatenate([[0.01], inner, [0.99, 0.995]])


#: 42 strictly increasing levels containing 0.025, 0.5 and 0.975.
DEFAULT_LEVELS = _default_levels()
DEFAULT_LEVELS.setflags(write=False)


def check_levels(levels) -> np.ndarray:
    t = np.asarray(levels, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("quantile levels must be a non-empty 1-D sequence")
    if np.any((t <= 0) | (t >= 1)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    if np.any(np.diff(t) <= 0):
        raise ValueError("quantile levels must be strictly increasing")
    return t


@dataclass(frozen=True)
class QuantileForecast:
    """Per-step quantiles, columns aligned with ``levels``."""

    values: np.ndarray  # (T, K)
    levels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        lv = check_levels(self.levels)
        if v.ndim != 2 or v.shape[1] != lv.size:
            raise ValueError(f"quantile array shape {v.shape} does not match {lv.size} levels")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "levels", lv)

    def __len__(self):
        return self.values.shape[0]

    def at(self, tau: float) -> np.ndarray:
        i = np.flatnonzero(np.isclose(self.levels, tau, rtol=0, atol=1e-12))
        if i.size == 0:
            raise KeyError(f"level {tau} not available (have {self.levels.tolist()})")
        return self.values[:, i[0]]

    @property
    def median(self) -> np.ndarray:
        return self.at(0.5)

    def shifted(self, offset) -> "QuantileForecast":
        return QuantileForecast(self.values + np.asarray(offset, dtype=float)[:, None], self.levels)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([repr(float(t)) for t in self.levels])
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "QuantileForecast":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array(rows[1:], dtype=float).reshape(-1, len(rows[0])), np.array(rows[0], dtype=float))



@dataclass(frozen=True)
class EnsembleForecast:
    """``M`` sampled outputs per time step; ``source`` names the method."""

    samples: np.ndarray  # (T, M)
    source: str = "unknown"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValueError(f"ensemble must be (T, M), got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("ensemble contains non-finite values")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def size(self) -> int:
        return self.samples.shape[1]

    def shifted(self, offset) -> "EnsembleForecast":
        return EnsembleForecast(self.samples + np.asarray(offset, dtype=float)[:, None], self.source)

    def scaled(self, scale: float, offset: float = 0.0) -> "EnsembleForecast":
        return EnsembleForecast(self.samples * scale + offset, self.source)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"m{i}" for i in range(self.size)])
            for row in self.samples:
                w.writerow([repr(float(v)) for v in row])
