"""Log-posterior densities over unconstrained parameter vectors for HMC.

Bounded quantities (noise scales, uniform-prior weights, horseshoe scales)
are sampled on the real line; each target adds the log-Jacobian of its
transform so the constrained marginals are the intended ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .mlp import MlpSpec, _forward, forward, vjp
from .priors import IntervalTransform, Prior

_LOG_2PI = math.log(2 * math.pi)
_LOG_2_OVER_PI = math.log(2 / math.pi)


@dataclass(frozen=True)
class LogDensity:
    """A differentiable log density on R^dim.

    ``fn(q)`` returns ``(log_prob, grad)``; ``constrain(q)`` maps a point to
    named model quantities.
    """

    dim: int
    fn: Callable[[np.ndarray], Tuple[float, np.ndarray]]
    constrain: Callable[[np.ndarray], Dict[str, np.ndarray]]
    name: str = "target"

    def value_and_grad(self, q) -> Tuple[float, np.ndarray]:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {q.shape}")
        return self.fn(q)

    def log_prob(self, q) -> float:
        return self.value_and_grad(q)[0]

    def grad(self, q) -> np.ndarray:
        return self.value_and_grad(q)[1]


def build_readout_target(
    X,
    y,
    spec: MlpSpec,
    prior="N(0,1)",
    noise_prior="Unif(0,10)",
    noise_var: Optional[float] = None,
) -> LogDensity:
    """Posterior of the readout parameters under ``y ~ N(g(s; R), Sigma)``.

    Layout: ``[u_R (n_params), v_Sigma]``; the last entry is omitted when
    ``noise_var`` is fixed. Uniform weight priors use ``R = a + (b-a) sigmoid(u)``,
    the noise variance ``Sigma = a + (b-a) sigmoid(v)`` under its uniform prior.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} states but {y.size} targets")
    if X.shape[1] != spec.widths[0] or spec.widths[-1] != 1:
        raise ValueError("readout spec does not match the state width or is not single-output")
    prior = Prior.parse(prior)
    noise_prior = Prior.parse(noise_prior)
    if prior.kind == "horseshoe":
        raise ValueError("use build_ssvs_target for the horseshoe prior")
    if noise_var is None and noise_prior.kind != "uniform":
        raise ValueError("a learned noise variance needs a uniform prior")
    D = spec.n_params
    learn_noise = noise_var is None
    w_tf = IntervalTransform(prior.a, prior.b) if prior.kind == "uniform" else None
    nv_tf = IntervalTransform(noise_prior.a, noise_prior.b) if learn_noise else None
    T = y.size
    dim = D + (1 if learn_noise else 0)

    def constrain(q):
        u = q[:D]
        R = w_tf.forward(u) if w_tf else u
        nv = float(nv_tf.forward(q[D])) if learn_noise else float(noise_var)
        return {"R": R, "noise_var": np.array(nv)}

    def fn(q):
        u = q[:D]
        if w_tf:
            R = w_tf.forward(u)
            lp = float(np.sum(w_tf.log_jacobian(u))) - D * math.log(prior.b - prior.a)
        else:
            R = u
            lp = prior.log_density(R)
        if learn_noise:
            v = q[D]
            nv = float(nv_tf.forward(v))
            lp += float(nv_tf.log_jacobian(v)) - math.log(noise_prior.b - noise_prior.a)
        else:
            nv = float(noise_var)
        if nv <= 0:
            return -math.inf, np.full(dim, np.nan)
        pred, cache = _forward(spec, R, X, None)
        r = y - pred[:, 0]
        sse = float(r @ r)
        ll = -0.5 * T * (_LOG_2PI + math.log(nv)) - 0.5 * sse / nv
        gR = vjp(spec, R, X, (r / nv)[:, None], cache=cache)
        grad = np.empty(dim)
        if w_tf:
            grad[:D] = gR * w_tf.dx_du(u) + w_tf.grad_log_jacobian(u)
        else:
            grad[:D] = gR + prior.grad_log_density(R)
        if learn_noise:
            dll_dnv = -0.5 * T / nv + 0.5 * sse / nv**2
            grad[D] = dll_dnv * float(nv_tf.dx_du(v)) + float(nv_tf.grad_log_jacobian(v))
        return ll + lp, grad

    return LogDensity(dim, fn, constrain, f"readout[{prior}]")


def readout_init(spec: MlpSpec, prior="N(0,1)", noise_prior="Unif(0,10)", learn_noise: bool = True,
                 rng: Optional[np.random.Generator] = None, noise_var0: float = 0.5, scale: float = 0.1) -> np.ndarray:
    """A sensible unconstrained starting point for :func:`build_readout_target`."""
    rng = np.random.default_rng(0) if rng is None else rng
    prior = Prior.parse(prior)
    D = spec.n_params
    if prior.kind == "uniform":
        u = rng.normal(-2.0, scale, D)
    else:
        u = scale * rng.standard_normal(D)
    if not learn_noise:
        return u
    np_ = Prior.parse(noise_prior)
    v = IntervalTransform(np_.a, np_.b).inverse(noise_var0)
    return np.concatenate([u, [float(v)]])


def build_ssvs_target(X, y, noise_prior="Unif(0,10)") -> LogDensity:
    """Horseshoe linear regression ``y ~ N(S beta, sigma^2)``,
    ``beta_i ~ N(0, lambda_i^2 tau^2)``, ``lambda_i, tau ~ C+(0, 1)``,
    ``sigma ~ U(a, b)``.

    Layout: ``[beta (p), log lambda (p), log tau, logit-scaled sigma]``.
    With an empty data set the target is the prior alone; with ``p = 0`` only
    ``(log tau, sigma)`` remain.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ValueError("states must be a 2-D array (use shape (0, p) for a prior-only target)")
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} states but {y.size} targets")
    noise_prior = Prior.parse(noise_prior)
    if noise_prior.kind != "uniform":
        raise ValueError("sigma needs a uniform prior")
    sig_tf = IntervalTransform(noise_prior.a, noise_prior.b)
    n, p = X.shape
    dim = 2 * p + 2
    log_width = math.log(noise_prior.b - noise_prior.a)

    def unpack(q):
        return q[:p], q[p : 2 * p], q[2 * p], q[2 * p + 1]

    def constrain(q):
        beta, a, b, v = unpack(q)
        return {"beta": beta.copy(), "lambda": np.exp(a), "tau": np.array(math.exp(b)),
                "sigma": np.array(float(sig_tf.forward(v)))}

    def fn(q):
        beta, a, b, v = unpack(q)
        if b > 300 or (p and np.max(np.abs(a)) > 300):
            # scales beyond exp(300): treat as zero density so HMC rejects the move
            return -math.inf, np.full(dim, np.nan)
        lam2 = np.exp(2 * a)
        tau2 = math.exp(2 * b)
        sigma = float(sig_tf.forward(v))
        grad = np.zeros(dim)
        lp = 0.0
        # likelihood
        if n:
            r = y - X @ beta
            sse = float(r @ r)
            lp += -0.5 * n * _LOG_2PI - n * math.log(sigma) - 0.5 * sse / sigma**2
            grad[:p] += X.T @ r / sigma**2
            dsig = -n / sigma + sse / sigma**3
        else:
            dsig = 0.0
        # sigma prior (uniform) and its logit Jacobian
        lp += -log_width + float(sig_tf.log_jacobian(v))
        grad[2 * p + 1] = dsig * float(sig_tf.dx_du(v)) + float(sig_tf.grad_log_jacobian(v))
        # beta | lambda, tau
        var = lam2 * tau2
        w = beta**2 / var
        lp += float(np.sum(-0.5 * _LOG_2PI - a - b - 0.5 * w))
        grad[:p] += -beta / var
        grad[p : 2 * p] += -1.0 + w
        grad[2 * p] += float(np.sum(-1.0 + w))
        # half-Cauchy on lambda and tau, sampled on the log scale (Jacobian e^a)
        lp += float(np.sum(_LOG_2_OVER_PI - np.log1p(lam2) + a))
        grad[p : 2 * p] += 1.0 - 2.0 * lam2 / (1.0 + lam2)
        lp += _LOG_2_OVER_PI - math.log1p(tau2) + b
        grad[2 * p] += 1.0 - 2.0 * tau2 / (1.0 + tau2)
        return lp, grad

    return LogDensity(dim, fn, constrain, "ssvs[horseshoe]")


def ssvs_init(p: int, X=None, y=None, noise_prior="Unif(0,10)", sigma0: float = 1.0) -> np.ndarray:
    """Start at a ridge estimate of beta with unit scales."""
    beta = np.zeros(p)
    if X is not None and p and len(y):
        X = np.asarray(X, dtype=float)
        beta = np.linalg.solve(X.T @ X + np.eye(p), X.T @ np.asarray(y, dtype=float))
    np_ = Prior.parse(noise_prior)
    v = float(IntervalTransform(np_.a, np_.b).inverse(sigma0))
    return np.concatenate([beta, np.zeros(p), [0.0, v]])


def readout_predict(spec: MlpSpec, draws, X) -> np.ndarray:
    """Noise-free readout outputs for each parameter draw, shape (T, n_draws)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.stack([forward(spec, R, X)[:, 0] for R in draws], axis=1)
