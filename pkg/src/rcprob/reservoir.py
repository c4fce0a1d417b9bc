"""Echo state network reservoir and PCA state compression."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import TimeSeries


@dataclass(frozen=True)
class ReservoirConfig:
    n_units: int = 500
    input_dim: int = 1
    spectral_radius: float = 0.9
    density: float = 0.1
    input_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise ValueError("reservoir needs at least one unit")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not 0 < self.spectral_radius < 1:
            raise ValueError(f"spectral radius must lie in (0, 1), got {self.spectral_radius}")
        if not 0 < self.density <= 1:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")


def power_iteration_radius(w: np.ndarray, max_iter: int = 1000, tol: float = 1e-9, seed: int = 0) -> float:
    """Dominant |eigenvalue| estimate by power iteration.

    Only reliable when the dominant eigenvalue is real and isolated; for a
    complex-conjugate dominant pair the Rayleigh quotient oscillates and the
    growth-rate estimate converges slowly. Kept as a cheap cross-check.
    """
    x = np.random.default_rng(seed).standard_normal(w.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = w @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
        if abs(norm - est) < tol * max(norm, 1.0):
            est = norm
            break
        est = norm
    return float(est)


def spectral_radius(w: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(w))))


@dataclass(frozen=True)
class Reservoir:
    w_in: np.ndarray
    w: np.ndarray
    config: ReservoirConfig

    def run(self, inputs, washout: int = 100, initial_state: Optional[np.ndarray] = None) -> "StateSequence":
        return run(self, inputs, washout, initial_state)


def init_reservoir(config: ReservoirConfig) -> Reservoir:
    """Draw the fixed input and recurrent matrices.

    ``w`` is uniform on [-1, 1], sparsified to ``density`` and rescaled so its
    spectral radius equals ``config.spectral_radius``. ``w_in`` is dense and
    uniform on [-input_scale, input_scale].
    """
    rng = np.random.default_rng(config.seed)
    n, k = config.n_units, config.input_dim
    w = rng.uniform(-1.0, 1.0, size=(n, n))
    w *= rng.random((n, n)) < config.density
    rho = spectral_radius(w)
    if rho == 0.0:
        raise ValueError(
            f"recurrent matrix has zero spectral radius after sparsification "
            f"(n_units={n}, density={config.density}); raise density or change seed"
        )
    w *= config.spectral_radius / rho
    w_in = rng.uniform(-config.input_scale, config.input_scale, size=(n, k))
    w.setflags(write=False)
    w_in.setflags(write=False)
    return Reservoir(w_in, w, config)


@dataclass(frozen=True)
class StateSequence:
    """Row ``t`` is the reservoir state after consuming input ``t + washout_dropped``."""

    states: np.ndarray
    washout_dropped: int = 0

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def width(self) -> int:
        return self.states.shape[1]

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if meta is not None:
                fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow([f"s{i}" for i in range(self.width)])
            for row in self.states:
                w.writerow([repr(float(v)) for v in row])


def run(reservoir: Reservoir, inputs, washout: int = 100, initial_state: Optional[np.ndarray] = None) -> StateSequence:
    """Drive the reservoir: ``s[t+1] = tanh(W_in x[t+1] + W s[t])``, ``s[0] = 0``.

    The first ``washout`` states are dropped.
    """
    x = inputs.values if isinstance(inputs, TimeSeries) else np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if x.shape[1] != reservoir.w_in.shape[1]:
        raise ValueError(f"input has dim {x.shape[1]}, reservoir expects {reservoir.w_in.shape[1]}")
    if washout < 0 or washout >= T:
        raise ValueError(f"washout {washout} must be in [0, {T})")
    n = reservoir.w.shape[0]
    s = np.zeros(n) if initial_state is None else np.array(initial_state, dtype=float)
    drive = x @ reservoir.w_in.T
    # row-vector form of W s: s @ W.T
    wt = np.ascontiguousarray(reservoir.w.T)
    out = np.empty((T, n))
    for t in range(T):
        s = np.tanh(drive[t] + s @ wt)
        out[t] = s
    return StateSequence(out[washout:], washout)


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (N, d), orthonormal columns
    explained_variance: np.ndarray  # (d,), non-increasing

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def transform(self, states) -> StateSequence:
        return pca_transform(self, states)

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.components.T + self.mean


def pca_fit(states, d: Optional[int] = None, variance_fraction: float = 0.99) -> PcaModel:
    """Principal components of the (sample, ddof=1) state covariance.

    With ``d=None`` the smallest dimension explaining ``variance_fraction``
    of the total variance is used.
    """
    S = np.asarray(getattr(states, "states", states), dtype=float)
    T, N = S.shape
    if T < 2:
        raise ValueError("need at least two states for PCA")
    mean = S.mean(axis=0)
    _, sv, vt = np.linalg.svd(S - mean, full_matrices=False)
    var = sv**2 / (T - 1)
    if d is None:
        total = var.sum()
        if total == 0:
            d = 1
        else:
            d = int(np.searchsorted(np.cumsum(var) / total, variance_fraction - 1e-12) + 1)
            d = min(d, var.size)
    if not 1 <= d <= N:
        raise ValueError(f"PCA dimension d={d} out of range [1, {N}]")
    if d > vt.shape[0]:
        raise ValueError(f"PCA dimension d={d} needs at least {d} states, got T={T}")
    comps = vt[:d].T
    # fixed sign convention: largest-magnitude loading positive
    signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(d)])
    signs[signs == 0] = 1.0
    return PcaModel(mean, comps * signs, var[:d].copy())


def pca_transform(model: PcaModel, states) -> StateSequence:
    washout = getattr(states, "washout_dropped", 0)
    S = np.asarray(getattr(states, "states", states), dtype=float)
    if S.shape[1] != model.mean.size:
        raise ValueError(f"states have width {S.shape[1]}, PCA expects {model.mean.size}")
    return StateSequence((S - model.mean) @ model.components, washout)


def config_dict(cfg: ReservoirConfig) -> dict:
    return asdict(cfg)
