"""Variational inference for the readout parameters.

The variational family is a Gaussian with low-rank-plus-diagonal covariance
``C C^T + Psi``. Sampling uses ``R = mu + C phi + sqrt(Psi) z`` with
``phi ~ N(0, I_r)`` and ``z ~ N(0, I_D)``, which is also the
reparameterisation through which ELBO gradients flow.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .forecast import EnsembleForecast
from .mlp import MlpSpec, TrainingDiverged, forward, vjp, _forward
from .priors import Prior, sigmoid, softplus, softplus_inv

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2 * math.pi)
PSI_FLOOR = 1e-8


class SupportError(ValueError):
    """The variational mean left the support of a bounded prior."""


@dataclass(frozen=True)
class LowRankGaussian:
    mean: np.ndarray  # (D,)
    factor: np.ndarray  # (D, r)
    diag_raw: np.ndarray  # (D,), Psi = softplus(diag_raw) + psi_floor
    psi_floor: float = PSI_FLOOR

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        factor = np.asarray(self.factor, dtype=float).reshape(mean.size, -1)
        d = np.asarray(self.diag_raw, dtype=float)
        if d.shape != mean.shape:
            raise ValueError("diag_raw must match the mean's shape")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "factor", factor)
        object.__setattr__(self, "diag_raw", d)

    @classmethod
    def from_psi(cls, mean, factor, psi, psi_floor: float = PSI_FLOOR) -> "LowRankGaussian":
        psi = np.asarray(psi, dtype=float)
        return cls(mean, factor, softplus_inv(np.maximum(psi - psi_floor, 1e-300)), psi_floor)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    @property
    def psi(self) -> np.ndarray:
        return softplus(self.diag_raw) + self.psi_floor

    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T + np.diag(self.psi)

    def _capacitance(self):
        C, psi = self.factor, self.psi
        pc = C / psi[:, None]
        A = np.eye(self.rank) + C.T @ pc
        return pc, A

    def logdet(self) -> float:
        pc, A = self._capacitance()
        sign, ld = np.linalg.slogdet(A)
        return float(np.sum(np.log(self.psi)) + ld)

    def entropy(self) -> float:
        return 0.5 * (self.dim * (1.0 + _LOG_2PI) + self.logdet())

    def _inv_terms(self):
        """``Sigma^-1 C`` and ``diag(Sigma^-1)`` via the Woodbury identity."""
        pc, A = self._capacitance()
        # A = I + C^T Psi^-1 C is r x r and >= I, so an explicit inverse is safe
        sinv_c = pc @ np.linalg.inv(A)  # Psi^-1 C A^-1
        diag_inv = 1.0 / self.psi - np.sum(sinv_c * pc, axis=1)
        return sinv_c, diag_inv

    def sample(self, rng: np.random.Generator, n: Optional[int] = None, return_noise: bool = False):
        size = 1 if n is None else n
        phi = rng.standard_normal((size, self.rank))
        z = rng.standard_normal((size, self.dim))
        R = self.mean + phi @ self.factor.T + z * np.sqrt(self.psi)
        if n is None:
            R, phi, z = R[0], phi[0], z[0]
        return (R, phi, z) if return_noise else R


def vi_sample(q: LowRankGaussian, rng: np.random.Generator) -> np.ndarray:
    return q.sample(rng)


def kl_isotropic(q: LowRankGaussian, scale: float, loc: float = 0.0) -> float:
    """Closed-form ``KL(q || N(loc, scale^2 I))``."""
    s2 = scale * scale
    m = q.mean - loc
    tr = np.sum(q.factor**2) + np.sum(q.psi)
    D = q.dim
    return float(0.5 * ((tr + m @ m) / s2 - D + D * math.log(s2) - q.logdet()))


def kl_isotropic_grads(q: LowRankGaussian, scale: float, loc: float = 0.0):
    """Gradients of :func:`kl_isotropic` w.r.t. (mean, factor, diag_raw)."""
    s2 = scale * scale
    sinv_c, diag_inv = q._inv_terms()
    g_mean = (q.mean - loc) / s2
    g_factor = q.factor / s2 - sinv_c
    g_psi = 0.5 * (1.0 / s2 - diag_inv)
    return g_mean, g_factor, g_psi * sigmoid(q.diag_raw)


def entropy_grads(q: LowRankGaussian):
    sinv_c, diag_inv = q._inv_terms()
    return np.zeros(q.dim), sinv_c, 0.5 * diag_inv * sigmoid(q.diag_raw)


@dataclass(frozen=True)
class LikelihoodModel:
    """Gaussian observation model ``y ~ N(g(s; R), noise_var)``.

    ``noise_var`` is either fixed (``learn_noise=False``) or learned on a log
    scale, clipped to the support of ``noise_prior``.
    """

    spec: MlpSpec
    prior: Prior = Prior("normal", 0.0, 1.0)
    noise_prior: Prior = Prior("uniform", 0.0, 1.0)
    noise_var: float = 0.1
    learn_noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "prior", Prior.parse(self.prior))
        object.__setattr__(self, "noise_prior", Prior.parse(self.noise_prior))
        if self.prior.kind == "horseshoe":
            raise ValueError("the horseshoe prior is only available for SSVS")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def log_likelihood(self, R, X, y, noise_var) -> float:
        r = y - forward(self.spec, R, X)[:, 0]
        return float(-0.5 * y.size * (_LOG_2PI + math.log(noise_var)) - 0.5 * (r @ r) / noise_var)

    def log_likelihood_grad(self, R, X, y, noise_var):
        """(value, d/dR, d/dlog noise_var)."""
        pred, cache = _forward(self.spec, R, X, None)
        r = y - pred[:, 0]
        sse = float(r @ r)
        val = -0.5 * y.size * (_LOG_2PI + math.log(noise_var)) - 0.5 * sse / noise_var
        gR = vjp(self.spec, R, X, (r / noise_var)[:, None], cache=cache)
        g_lognv = -0.5 * y.size + 0.5 * sse / noise_var
        return val, gR, g_lognv


@dataclass
class ElboEstimate:
    value: float
    grads: Dict[str, np.ndarray]
    expected_loglik: float
    kl: float


def elbo(q: LowRankGaussian, model: LikelihoodModel, X, y, n_mc: int = 1,
         rng: Optional[np.random.Generator] = None, log_noise_var: Optional[float] = None,
         noise=None) -> ElboEstimate:
    """Reparameterised Monte Carlo ELBO and its gradient.

    For a Gaussian prior the KL term is analytic. For a uniform prior the
    bounded support makes the KL infinite whenever ``q`` leaks outside it, so
    the relaxed objective ``E_q[log p(y|R)] + H(q) + log p_U`` is used and the
    mean must stay inside the support.

    ``noise`` optionally supplies pre-drawn ``(phi, z)`` arrays of shapes
    ``(n_mc, r)`` and ``(n_mc, D)`` (common random numbers).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lognv = math.log(model.noise_var) if log_noise_var is None else float(log_noise_var)
    nv = math.exp(lognv)
    if noise is None:
        rng = rng if rng is not None else np.random.default_rng()
        phi = rng.standard_normal((n_mc, q.rank))
        z = rng.standard_normal((n_mc, q.dim))
    else:
        phi, z = (np.atleast_2d(a) for a in noise)
        n_mc = phi.shape[0]
    sd = np.sqrt(q.psi)
    R = q.mean + phi @ q.factor.T + z * sd

    ell = 0.0
    gR_sum = np.zeros((n_mc, q.dim))
    g_lognv = 0.0
    for j in range(n_mc):
        v, gR, gl = model.log_likelihood_grad(R[j], X, y, nv)
        ell += v
        gR_sum[j] = gR
        g_lognv += gl
    ell /= n_mc
    g_lognv /= n_mc
    g_mean = gR_sum.mean(axis=0)
    g_factor = gR_sum.T @ phi / n_mc
    g_psi = np.mean(gR_sum * z, axis=0) * 0.5 / sd
    g_draw = g_psi * sigmoid(q.diag_raw)

    prior = model.prior
    if prior.kind == "normal":
        kl = kl_isotropic(q, prior.b, prior.a)
        km, kf, kd = kl_isotropic_grads(q, prior.b, prior.a)
        g_mean, g_factor, g_draw = g_mean - km, g_factor - kf, g_draw - kd
    else:
        if not prior.in_support(q.mean):
            raise SupportError(f"variational mean left the support of {prior}")
        # KL replaced by -(H(q) + log p_U)
        kl = -(q.entropy() + prior.log_density(q.mean))
        _, ef, ed = entropy_grads(q)
        g_factor, g_draw = g_factor + ef, g_draw + ed

    grads = {"mean": g_mean, "factor": g_factor, "diag_raw": g_draw,
             "log_noise_var": np.array(g_lognv if model.learn_noise else 0.0)}
    return ElboEstimate(ell - kl, grads, ell, kl)


@dataclass
class VIResult:
    q: LowRankGaussian
    log_noise_var: float
    model: LikelihoodModel
    elbo_trace: np.ndarray = field(repr=False)
    noise_clip_count: int = 0

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)

    def save(self, path, extra: Optional[dict] = None) -> None:
        path = Path(path)
        q = self.q
        flat = np.concatenate([q.mean, q.factor.ravel(), q.diag_raw, [self.log_noise_var]])
        flat.astype("<f8").tofile(path.with_suffix(".bin"))
        meta = {"n_params": q.dim, "rank": q.rank, "prior": str(self.model.prior),
                "noise_prior": str(self.model.noise_prior), "spec": self.model.spec.to_dict(),
                "learn_noise": self.model.learn_noise, "layout": ["mean", "factor", "diag_raw", "log_noise_var"]}
        meta.update(extra or {})
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "VIResult":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        D, r = meta["n_params"], meta["rank"]
        mean, rest = flat[:D], flat[D:]
        factor, rest = rest[: D * r].reshape(D, r), rest[D * r:]
        diag_raw, lognv = rest[:D], float(rest[D])
        model = LikelihoodModel(MlpSpec.from_dict(meta["spec"]), meta["prior"], meta["noise_prior"],
                                math.exp(lognv), meta["learn_noise"])
        return cls(LowRankGaussian(mean, factor, diag_raw), lognv, model, np.array([]))


def default_rank(n_params: int) -> int:
    return max(1, int(round(math.sqrt(n_params))))


def init_q(model: LikelihoodModel, rank: int, rng: np.random.Generator, init_scale: float = 0.1,
           init_psi: float = 1e-2) -> LowRankGaussian:
    D = model.n_params
    if model.prior.kind == "uniform":
        lo, hi = model.prior.a, model.prior.b
        mean = lo + (hi - lo) * rng.uniform(0.01, 0.1, size=D)
    else:
        mean = init_scale * rng.standard_normal(D)
    return LowRankGaussian.from_psi(mean, np.zeros((D, rank)), np.full(D, init_psi))


def fit_vi(model: LikelihoodModel, X, y, rank: Optional[int] = None, steps: int = 2000, lr: float = 1e-2,
           seed: int = 0, n_mc: int = 1, init: Optional[LowRankGaussian] = None,
           cov_lr: Optional[float] = None) -> VIResult:
    """Maximise the ELBO with Adam over ``(mean, factor, diag_raw, log noise var)``.

    ``cov_lr`` (default ``lr``) is the step size of the covariance parameters
    ``(factor, diag_raw)``. Their single-sample gradients are mostly noise, and
    Adam's per-coordinate scaling turns that noise into a random walk unless
    the step is kept small.
    """
    from .mlp import Adam

    if steps < 1:
        raise ValueError("steps must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    D = model.n_params
    r = default_rank(D) if rank is None else int(rank)
    q = init if init is not None else init_q(model, r, rng)
    r = q.rank
    lognv = math.log(model.noise_var)
    nv_hi = math.log(model.noise_prior.b) if model.noise_prior.kind == "uniform" else math.inf

    sizes = [D, D * r, D, 1]
    theta = np.concatenate([q.mean, q.factor.ravel(), q.diag_raw, [lognv]])
    cov_lr = lr if cov_lr is None else float(cov_lr)
    step_sizes = np.concatenate([np.full(D, lr), np.full(D * r + D, cov_lr), [lr]])
    opt = Adam(1.0)
    trace = np.empty(steps)
    clipped = 0
    for step in range(steps):
        mean, factor, draw, ln = np.split(theta, np.cumsum(sizes)[:-1])
        q = LowRankGaussian(mean, factor.reshape(D, r), draw)
        est = elbo(q, model, X, y, n_mc, rng, log_noise_var=float(ln[0]))
        if not np.isfinite(est.value):
            raise TrainingDiverged(f"non-finite ELBO at step {step} (lr={lr})")
        trace[step] = est.value
        g = np.concatenate([est.grads["mean"], est.grads["factor"].ravel(), est.grads["diag_raw"],
                            np.atleast_1d(est.grads["log_noise_var"])])
        theta = opt.step(theta, -g, lr=step_sizes)
        if model.learn_noise and theta[-1] >= nv_hi:
            theta[-1] = nv_hi - 1e-9
            clipped += 1
        elif not model.learn_noise:
            theta[-1] = lognv
    if clipped:
        logger.info("noise variance clipped to its prior support %d times", clipped)
    mean, factor, draw, ln = np.split(theta, np.cumsum(sizes)[:-1])
    return VIResult(LowRankGaussian(mean, factor.reshape(D, r), draw), float(ln[0]), model, trace, clipped)


def posterior_predict_vi(result: VIResult, states, n_samples: int = 500, seed: int = 0,
                         observation_noise: bool = True) -> EnsembleForecast:
    """Posterior-predictive ensemble: one parameter draw per column plus
    Gaussian observation noise of the fitted variance."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    S = np.atleast_2d(np.asarray(getattr(states, "states", states), dtype=float))
    rng = np.random.default_rng(seed)
    Rs = result.q.sample(rng, n_samples)
    out = np.empty((S.shape[0], n_samples))
    spec = result.model.spec
    for m in range(n_samples):
        out[:, m] = forward(spec, Rs[m], S)[:, 0]
    if observation_noise:
        out += math.sqrt(result.noise_var) * rng.standard_normal(out.shape)
    return EnsembleForecast(out, "vi")
