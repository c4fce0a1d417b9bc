"""Horseshoe shrinkage on a sparse linear regression.

Fifty candidate regressors, five of which matter. The HMC posterior keeps
the five large coefficients and pulls the rest towards zero.
"""

import numpy as np

from rcprob.hmc import HmcConfig, run_chain
from rcprob.targets import build_ssvs_target, ssvs_init


def main():
    rng = np.random.default_rng(0)
    n, p = 200, 50
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    active = np.sort(rng.choice(p, 5, replace=False))
    beta[active] = 3 * rng.choice([-1.0, 1.0], 5)
    y = X @ beta + 0.5 * rng.normal(size=n)

    target = build_ssvs_target(X, y)
    chain = run_chain(target, ssvs_init(p, X, y, sigma0=0.5), HmcConfig(0.05, 32, 500, 1000, seed=0))
    post = chain.samples[:, :p].mean(axis=0)

    print(f"acceptance {chain.accept_rate:.2f}, min ESS {chain.ess.min():.0f}, {chain.wall_time:.1f} s")
    print("active coefficients (true -> posterior mean):")
    for i in active:
        print(f"  beta[{i:2d}] {beta[i]:+.1f} -> {post[i]:+.3f}")
    inactive = np.setdiff1d(np.arange(p), active)
    print(f"largest |posterior mean| among the other {inactive.size}: {np.abs(post[inactive]).max():.3f}")


if __name__ == "__main__":
    main()
