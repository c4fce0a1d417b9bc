"""Uniform wrappers around the six readout-training methods.

Each ``fit_*`` function trains on ``(X, y)`` and returns a :class:`Fitted`
whose ``predict`` produces a forecast in the training scale. Training time
covers the training or sampling stage only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np

from .dropout import predict_mc_dropout, train_dropout
from .forecast import EnsembleForecast, QuantileForecast
from .hmc import HmcConfig, run_chain
from .mlp import Mlp, MlpSpec, OptimizerConfig
from .priors import Prior
from .quantile import predict_quantiles, train_qr
from .targets import build_readout_target, build_ssvs_target, readout_init, readout_predict, ssvs_init
from .variational import LikelihoodModel, fit_vi, posterior_predict_vi

METHODS = ("qr", "dropout", "vi", "mcmc", "mcmc_pca", "ssvs")


@dataclass
class Fitted:
    method: str
    predict: Callable[[np.ndarray, int], Union[EnsembleForecast, QuantileForecast]] = field(repr=False)
    train_time: float
    n_params: int
    diagnostics: Dict[str, float] = field(default_factory=dict)


def fit_qr(X, y, hidden, activation, levels, lr, steps, seed, batch_size=None) -> Fitted:
    spec = MlpSpec.build(X.shape[1], hidden, len(levels), activation)
    opt = OptimizerConfig("adam", lr, steps, batch_size, seed)
    t0 = time.perf_counter()
    model = train_qr(spec, X, y, levels, opt)
    dt = time.perf_counter() - t0
    return Fitted("qr", lambda S, seed=0: predict_quantiles(model, S), dt, spec.n_params,
                  {"final_loss": float(model.loss_trace[-1])})


def fit_dropout(X, y, hidden, activation, keep_prob, lr, steps, seed, n_samples=500, batch_size=None) -> Fitted:
    spec = MlpSpec.build(X.shape[1], hidden, 1, activation)
    opt = OptimizerConfig("adam", lr, steps, batch_size, seed)
    mlp = Mlp.init(spec, seed)
    t0 = time.perf_counter()
    res = train_dropout(mlp, X, y, keep_prob, opt)
    dt = time.perf_counter() - t0
    trained = res.mlp
    return Fitted("dropout", lambda S, seed=0: predict_mc_dropout(trained, S, keep_prob, n_samples, seed), dt,
                  spec.n_params, {"final_loss": float(res.loss_trace[-1])})


def fit_variational(X, y, hidden, activation, prior, noise_prior, lr, steps, seed, rank=None, n_mc=1,
                    n_samples=500, cov_lr=None) -> Fitted:
    spec = MlpSpec.build(X.shape[1], hidden, 1, activation)
    noise_prior = Prior.parse(noise_prior)
    # start the noise variance at the target variance, inside the prior support
    nv0 = max(float(np.var(y)), 1e-6)
    if noise_prior.kind == "uniform":
        nv0 = min(nv0, 0.5 * noise_prior.b)
    model = LikelihoodModel(spec, prior, noise_prior, noise_var=nv0)
    t0 = time.perf_counter()
    res = fit_vi(model, X, y, rank, steps, lr, seed, n_mc, cov_lr=cov_lr)
    dt = time.perf_counter() - t0
    return Fitted("vi", lambda S, seed=0: posterior_predict_vi(res, S, n_samples, seed), dt, spec.n_params,
                  {"final_elbo": float(res.elbo_trace[-1]), "noise_var": res.noise_var, "rank": res.q.rank,
                   "noise_clips": res.noise_clip_count})


def _thin(samples: np.ndarray, m: int) -> np.ndarray:
    idx = np.linspace(0, samples.shape[0] - 1, min(m, samples.shape[0])).round().astype(int)
    return samples[idx]


def fit_mcmc(X, y, hidden, activation, prior, noise_prior, hmc: HmcConfig, n_samples=500,
             method: str = "mcmc") -> Fitted:
    spec = MlpSpec.build(X.shape[1], hidden, 1, activation)
    target = build_readout_target(X, y, spec, prior, noise_prior)
    rng = np.random.default_rng(hmc.seed)
    init = readout_init(spec, prior, noise_prior, True, rng)
    chain = run_chain(target, init, hmc, rng)
    draws = [target.constrain(q) for q in _thin(chain.samples, n_samples)]
    Rs = np.array([d["R"] for d in draws])
    sds = np.sqrt([float(d["noise_var"]) for d in draws])

    def predict(S, seed=0):
        mean = readout_predict(spec, Rs, S)
        noise = np.random.default_rng(seed).standard_normal(mean.shape)
        return EnsembleForecast(mean + noise * sds, method)

    return Fitted(method, predict, chain.wall_time, spec.n_params,
                  {"accept_rate": chain.accept_rate, "ess_min": float(chain.ess.min()),
                   "step_size": chain.step_size, "n_divergent": chain.n_divergent})


def fit_ssvs(X, y, noise_prior, hmc: HmcConfig, n_samples=500) -> Fitted:
    target = build_ssvs_target(X, y, noise_prior)
    p = X.shape[1]
    rng = np.random.default_rng(hmc.seed)
    t0 = time.perf_counter()
    init = ssvs_init(p, X, y, noise_prior, sigma0=max(1e-3, min(1.0, float(np.std(y)))))
    chain = run_chain(target, init, hmc, rng)
    dt = time.perf_counter() - t0
    thinned = _thin(chain.samples, n_samples)
    betas = thinned[:, :p]
    sigmas = np.array([float(target.constrain(q)["sigma"]) for q in thinned])

    def predict(S, seed=0):
        mean = np.atleast_2d(S) @ betas.T
        noise = np.random.default_rng(seed).standard_normal(mean.shape)
        return EnsembleForecast(mean + noise * sigmas, "ssvs")

    return Fitted("ssvs", predict, dt, p, {"accept_rate": chain.accept_rate, "ess_min": float(chain.ess.min()),
                                           "step_size": chain.step_size, "n_divergent": chain.n_divergent})
