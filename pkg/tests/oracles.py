"""Independent reference computations shared by the tests."""

import numpy as np


def central_difference(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300))


def naive_forward(layers, acts, x, masks=None, keep=1.0):
    """Loop-based MLP for cross-checking the vectorised forward pass."""
    h = np.array(x, dtype=float)
    for li, (W, b) in enumerate(layers):
        if masks is not None:
            h = h * masks[li] / keep
        z = np.array([sum(h[i] * W[i, j] for i in range(W.shape[0])) + b[j] for j in range(W.shape[1])])
        if li < len(layers) - 1:
            z = np.tanh(z) if acts[li] == "tanh" else np.maximum(z, 0)
        h = z
    return h


def step_cdf(q, tau, x):
    """Quantile step CDF evaluated pointwise by a plain loop."""
    out = 0.0
    for qi, ti in zip(q, tau):
        if x >= qi:
            out = ti
    return 1.0 if x >= q[-1] else out


def step_cdf_crps_quadrature(q, tau, y):
    """CRPS of the quantile step CDF by midpoint quadrature on the breakpoints.

    The integrand is piecewise constant between the sorted breakpoints
    ``{q_i} U {y}``, so the midpoint rule on each piece is exact; the tails
    beyond the outermost breakpoint contribute zero.
    """
    pts = np.sort(np.append(np.asarray(q, dtype=float), y))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            m = 0.5 * (a + b)
            total += (step_cdf(q, tau, m) - float(m >= y)) ** 2 * (b - a)
    return total


def kolmogorov_pvalue(samples, cdf):
    """Asymptotic one-sample Kolmogorov-Smirnov p-value."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    d = max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
    lam = (np.sqrt(n) + 0.12 + 0.11 / np.sqrt(n)) * d
    k = np.arange(1, 101)
    return float(np.clip(2 * np.sum((-1.0) ** (k - 1) * np.exp(-2 * k**2 * lam**2)), 0.0, 1.0))


def conjugate_linear_regression(X, y, noise_var, prior_var=1.0):
    """Posterior mean and covariance of ``beta`` for ``y ~ N(X beta, noise_var)``, ``beta ~ N(0, prior_var I)``."""
    prec = X.T @ X / noise_var + np.eye(X.shape[1]) / prior_var
    cov = np.linalg.inv(prec)
    return cov @ X.T @ y / noise_var, cov


def dense_kl_to_isotropic(mean, cov, scale, loc=0.0):
    d = mean.size
    s2 = scale**2
    m = mean - loc
    _, ld = np.linalg.slogdet(cov)
    return 0.5 * (np.trace(cov) / s2 + m @ m / s2 - d + d * np.log(s2) - ld)
