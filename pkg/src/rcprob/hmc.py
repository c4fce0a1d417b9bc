"""Hamiltonian Monte Carlo with a leapfrog integrator and dual-averaging
step-size warmup (identity mass matrix, unit temperature)."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

logger = logging.getLogger(__name__)


class HmcError(RuntimeError):
    pass


def leapfrog(q, p, step_size: float, n_steps: int, grad_log_prob: Callable, grad0=None):
    """``n_steps`` of half-kick / drift / half-kick on ``H = -log pi(q) + |p|^2 / 2``.

    Returns ``(q, p)``; inputs are not modified. ``grad0`` optionally supplies
    the gradient at the starting point.
    """
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    g = grad_log_prob(q) if grad0 is None else grad0
    _check_finite(g, 0)
    p += 0.5 * step_size * g
    for i in range(n_steps):
        q += step_size * p
        g = grad_log_prob(q)
        _check_finite(g, i + 1)
        if i < n_steps - 1:
            p += step_size * g
    p += 0.5 * step_size * g
    return q, p


def _check_finite(g, i):
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite gradient at leapfrog step {i}")


def hamiltonian(target, q, p) -> float:
    return -target.log_prob(q) + 0.5 * float(np.dot(p, p))


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.1
    n_leapfrog: int = 32
    n_warmup: int = 500
    n_samples: int = 1000
    target_accept: float = 0.8
    jitter: float = 0.1  # kept-phase step size drawn uniformly in eps*(1 +/- jitter)
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if self.n_leapfrog < 1:
            raise ValueError("need at least one leapfrog step")
        if self.n_warmup < 0 or self.n_samples < 1:
            raise ValueError("invalid warmup/sample counts")
        if not 0 < self.target_accept < 1:
            raise ValueError("target acceptance must lie in (0, 1)")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")


class StepResult(NamedTuple):
    q: np.ndarray
    accepted: bool
    delta_h: float
    accept_prob: float
    log_prob: float
    grad: np.ndarray
    divergent: bool


def hmc_step(q, target, step_size: float, n_leapfrog: int, rng: np.random.Generator,
             log_prob=None, grad=None) -> StepResult:
    """One HMC transition: fresh N(0, I) momentum, leapfrog proposal,
    Metropolis test with probability ``min(1, exp(H(q, p) - H(q*, p*)))``.

    A proposal whose energy or gradient is not finite is rejected and flagged
    as divergent.
    """
    q = np.asarray(q, dtype=float)
    if log_prob is None or grad is None:
        log_prob, grad = target.value_and_grad(q)
    if not np.isfinite(log_prob):
        raise HmcError("target is not finite at the current state")
    p0 = rng.standard_normal(q.size)
    h0 = -log_prob + 0.5 * float(p0 @ p0)
    cache = {}

    def g(x):
        v, gr = target.value_and_grad(x)
        cache["v"], cache["g"] = v, gr
        return gr

    u = rng.random()
    try:
        q1, p1 = leapfrog(q, p0, step_size, n_leapfrog, g, grad0=grad)
        lp1 = cache["v"] if n_leapfrog > 0 else log_prob
        h1 = -lp1 + 0.5 * float(p1 @ p1)
        divergent = not np.isfinite(h1)
    except FloatingPointError:
        divergent = True
    if divergent:
        return StepResult(q, False, math.inf, 0.0, log_prob, grad, True)
    dh = h1 - h0
    accept_prob = 1.0 if dh <= 0 else math.exp(-dh)
    if dh <= 0 or u < accept_prob:
        return StepResult(q1, True, dh, accept_prob, lp1, cache["g"], False)
    return StepResult(q, False, dh, accept_prob, log_prob, grad, False)


class DualAveraging:
    """Step-size adaptation toward a target mean acceptance probability."""

    def __init__(self, step_size: float, target: float = 0.8, gamma: float = 0.05, t0: float = 10.0,
                 kappa: float = 0.75):
        self.mu = math.log(10 * step_size)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps = math.log(step_size)
        self.log_eps_bar = 0.0
        self.t = 0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_eps_bar)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    f = np.fft.rfft(xc, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] == 0:
        return np.ones(1)
    return acov / acov[0]


def effective_sample_size(samples: np.ndarray) -> np.ndarray:
    """Per-column ESS using Geyer's initial monotone positive-sequence estimator."""
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    n = S.shape[0]
    out = np.empty(S.shape[1])
    for j in range(S.shape[1]):
        rho = autocorrelation(S[:, j])
        if rho.size == 1:
            out[j] = n
            continue
        m = (rho.size - 1) // 2
        pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
        pos = np.flatnonzero(pairs <= 0)
        k = pos[0] if pos.size else pairs.size
        gam = np.minimum.accumulate(pairs[:k])
        tau = -1.0 + 2.0 * np.sum(gam)
        out[j] = n / max(tau, 1.0 / math.log10(max(n, 10)))
    return out


@dataclass
class Chain:
    samples: np.ndarray = field(repr=False)  # (n_samples, D), unconstrained
    accept_rate: float
    ess: np.ndarray = field(repr=False)
    wall_time: float
    step_size: float
    warmup_accept_rate: float
    n_divergent: int
    config: HmcConfig

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def diagnostics(self) -> dict:
        return {
            "accept_rate": self.accept_rate,
            "warmup_accept_rate": self.warmup_accept_rate,
            "ess_min": float(np.min(self.ess)),
            "ess_median": float(np.median(self.ess)),
            "ess": self.ess.tolist(),
            "wall_time": self.wall_time,
            "step_size": self.step_size,
            "n_divergent": self.n_divergent,
            "config": asdict(self.config),
            "shape": list(self.samples.shape),
        }

    def save(self, path) -> None:
        path = Path(path)
        self.samples.astype("<f8").tofile(path.with_suffix(".bin"))
        path.with_suffix(".json").write_text(json.dumps(self.diagnostics(), indent=2, sort_keys=True))


def run_chain(target, init, cfg: HmcConfig = HmcConfig(), rng: Optional[np.random.Generator] = None) -> Chain:
    """Single HMC chain: dual-averaging warmup of the step size at fixed
    trajectory length, then ``cfg.n_samples`` recorded draws.

    Wall-clock time covers warmup and sampling.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    t_start = time.perf_counter()
    q = np.array(init, dtype=float)
    lp, g = target.value_and_grad(q)
    if not np.isfinite(lp):
        raise HmcError("initial point is outside the target's support")

    eps = cfg.step_size
    adapt = DualAveraging(eps, cfg.target_accept)
    n_acc_warm = 0
    n_div = 0
    for _ in range(cfg.n_warmup):
        res = hmc_step(q, target, eps, cfg.n_leapfrog, rng, lp, g)
        q, lp, g = res.q, res.log_prob, res.grad
        n_acc_warm += res.accepted
        n_div += res.divergent
        eps = adapt.update(res.accept_prob)
    if cfg.n_warmup:
        if n_acc_warm == 0:
            raise HmcError(
                "no proposal accepted during warmup; start from a better point or "
                "reduce the initial step size / number of leapfrog steps"
            )
        eps = adapt.final_step_size

    D = q.size
    samples = np.empty((cfg.n_samples, D))
    n_acc = 0
    for i in range(cfg.n_samples):
        e = eps * (1.0 + cfg.jitter * (2.0 * rng.random() - 1.0)) if cfg.jitter else eps
        res = hmc_step(q, target, e, cfg.n_leapfrog, rng, lp, g)
        q, lp, g = res.q, res.log_prob, res.grad
        n_acc += res.accepted
        n_div += res.divergent
        samples[i] = q
    wall = time.perf_counter() - t_start
    warm_rate = n_acc_warm / cfg.n_warmup if cfg.n_warmup else float("nan")
    chain = Chain(samples, n_acc / cfg.n_samples, effective_sample_size(samples), wall, eps, warm_rate, n_div, cfg)
    if n_div:
        logger.info("chain finished with %d divergent transitions", n_div)
    return chain
