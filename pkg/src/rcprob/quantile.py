"""Multi-head quantile regression readout trained with the pinball loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forecast import DEFAULT_LEVELS, QuantileForecast, check_levels
from .mlp import Mlp, MlpSpec, OptimizerConfig, TrainResult, pinball, train_deterministic

__all__ = [
    "DEFAULT_LEVELS",
    "QuantileForecast",
    "QuantileModel",
    "check_levels",
    "pinball_loss",
    "predict_quantiles",
    "train_qr",
]


def pinball_loss(residual, tau):
    """Pinball (check) loss of a residual ``y - q`` at level ``tau``."""
    out = pinball(residual, tau)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class QuantileModel:
    mlp: Mlp
    levels: np.ndarray
    loss_trace: np.ndarray = field(default=None, repr=False)


def train_qr(spec: MlpSpec, X, y, levels=DEFAULT_LEVELS, opt: OptimizerConfig = OptimizerConfig(),
             init: Mlp = None) -> QuantileModel:
    """One shared network, one output head per level, trained on the mean
    pinball loss over heads and samples."""
    levels = check_levels(levels)
    if spec.widths[-1] != levels.size:
        raise ValueError(f"output width {spec.widths[-1]} must equal the number of levels {levels.size}")
    mlp = init if init is not None else Mlp.init(spec, opt.seed)
    res: TrainResult = train_deterministic(mlp, X, y, "pinball", opt, levels=levels)
    return QuantileModel(res.mlp, levels, res.loss_trace)


def predict_quantiles(model: QuantileModel, states) -> QuantileForecast:
    """Raw head outputs, sorted per step so quantiles never cross."""
    S = getattr(states, "states", states)
    raw = model.mlp(np.atleast_2d(np.asarray(S, dtype=float)))
    return QuantileForecast(np.sort(raw, axis=1), model.levels)
