"""MC-dropout: ensembles from a dropout-trained readout with masks kept on."""

from __future__ import annotations

import numpy as np

from .forecast import EnsembleForecast
from .mlp import Mlp, OptimizerConfig, TrainResult, sample_masks, train_deterministic


def train_dropout(mlp: Mlp, X, y, keep_prob: float, opt: OptimizerConfig = OptimizerConfig()) -> TrainResult:
    """MSE training with fresh Bernoulli masks at every step."""
    return train_deterministic(mlp, X, y, "mse", opt, keep_prob=keep_prob)


def predict_mc_dropout(mlp: Mlp, states, keep_prob: float, n_samples: int = 500, seed: int = 0) -> EnsembleForecast:
    """``n_samples`` stochastic forward passes per state.

    Every (state, sample) pair gets its own i.i.d. masks. Sample ``m`` uses
    the generator spawned as child ``m`` of ``seed``, so results do not depend
    on evaluation order.
    """
    if not 0 < keep_prob <= 1:
        raise ValueError(f"keep probability must lie in (0, 1], got {keep_prob}")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    S = np.atleast_2d(np.asarray(getattr(states, "states", states), dtype=float))
    T = S.shape[0]
    out = np.empty((T, n_samples))
    if keep_prob == 1.0:
        out[:] = mlp(S)[:, :1]
        return EnsembleForecast(out, "dropout")
    children = np.random.SeedSequence(seed).spawn(n_samples)
    for m, child in enumerate(children):
        rng = np.random.default_rng(child)
        masks = sample_masks(mlp.spec, keep_prob, rng, n_rows=T)
        out[:, m] = mlp(S, masks)[:, 0]
    return EnsembleForecast(out, "dropout")
