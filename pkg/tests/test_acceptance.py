"""Acceptance gate: one test per criterion, each with its runtime limit.

Each test prints a ``[PASS]``/``[FAIL]`` line with the measured quantities;
the lines are repeated in the terminal summary.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from oracles import central_difference, conjugate_linear_regression, dense_kl_to_isotropic, rel_error
from oracles import step_cdf_crps_quadrature
from test_calibration import overconfident_trial
from test_metrics import gaussian_quantiles
from test_mlp import near_kink, random_problem
from test_variational import MEAN_SPEC, NV, conjugate_data, conjugate_posterior
from rcprob.cli import main as cli_main
from rcprob.experiment import compare_methods, default_study
from rcprob.forecast import DEFAULT_LEVELS
from rcprob.hmc import HmcConfig, leapfrog, run_chain
from rcprob.metrics import CalibrationCurve, calibration_curve, calibration_error, crps_step, interval_metrics
from rcprob.mlp import MlpSpec, OptimizerConfig, gradient, loss_value
from rcprob.quantile import predict_quantiles, train_qr
from rcprob.reservoir import ReservoirConfig, init_reservoir, spectral_radius
from rcprob.targets import LogDensity, build_readout_target, build_ssvs_target, ssvs_init
from rcprob.variational import LikelihoodModel, LowRankGaussian, fit_vi, kl_isotropic

HMC_METHODS = ("mcmc", "mcmc_pca", "ssvs")


def gate(report, number, title, limit, check):
    """Run ``check() -> (ok, detail)`` under a time limit and report the outcome."""
    t0 = time.perf_counter()
    ok, detail = check()
    dt = time.perf_counter() - t0
    passed = bool(ok) and dt < limit
    report(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title} ({dt:.1f} s, limit {limit:.0f} s): {detail}")
    assert ok, detail
    assert dt < limit, f"took {dt:.1f} s (limit {limit} s)"


def gaussian_target(dim):
    return LogDensity(dim, lambda q: (-0.5 * float(q @ q), -q), lambda q: {"x": q})


def test_01_gradient_suite(acceptance_report):
    def check():
        worst, n = 0.0, 0
        for li, loss in enumerate(("mse", "pinball")):
            for ai, act in enumerate(("tanh", "relu")):
                rng = np.random.default_rng([100, li, ai])
                done = 0
                while done < 25:
                    spec, p, X, y, lv = random_problem(rng, loss, act, max_units=64)
                    if near_kink(spec, p, X, y, loss):
                        continue
                    g = gradient(spec, p, X, y, loss, lv)
                    fd = central_difference(lambda q: loss_value(spec, q, X, y, loss, lv), p)
                    worst = max(worst, rel_error(g, fd))
                    done += 1
                    n += 1
        return worst < 1e-6, f"{n} networks, max relative error {worst:.2e} (< 1e-6)"

    gate(acceptance_report, 1, "gradient suite", 30, check)


def test_02_echo_state_suite(acceptance_report):
    def check():
        res = init_reservoir(ReservoirConfig(n_units=500, spectral_radius=0.9, seed=0))
        rho_err = abs(spectral_radius(res.w) - 0.9)
        rng = np.random.default_rng(0)
        t = np.arange(1000)
        u = np.sin(2 * np.pi * t / 7) + 0.1 * rng.normal(size=1000)
        a = res.run(u, washout=200, initial_state=rng.uniform(-1, 1, 500)).states
        b = res.run(u, washout=200, initial_state=rng.uniform(-1, 1, 500)).states
        gap = float(np.max(np.abs(a - b)))
        return gap < 1e-6 and rho_err < 1e-6, f"post-washout max gap {gap:.1e} (< 1e-6), radius error {rho_err:.1e}"

    gate(acceptance_report, 2, "echo-state suite", 10, check)


def test_03_qr_statistical_suite(acceptance_report):
    def check():
        rng = np.random.default_rng(3)
        y = rng.normal(size=5000)
        X = np.ones((5000, 1))
        levels = np.array([0.1, 0.5, 0.9])
        model = train_qr(MlpSpec.build(1, [], 3), X, y, levels, OptimizerConfig(lr=1e-2, steps=1500, seed=0))
        q = predict_quantiles(model, X[:1]).values[0]
        err = float(np.max(np.abs(q - np.quantile(y, levels))))
        held = rng.normal(size=5000)
        cov = float(np.mean(held <= q[2]))
        return err <= 0.05 and abs(cov - 0.9) <= 0.03, f"max head error {err:.3f} (<= 0.05), held-out 0.9 coverage {cov:.3f}"

    gate(acceptance_report, 3, "QR statistical suite", 60, check)


def test_04_hmc_oracle_suite(acceptance_report):
    def check():
        rng = np.random.default_rng(11)
        X = rng.normal(size=(40, 3))
        nv = 0.25
        y = X @ np.array([1.0, -0.5, 0.25]) + math.sqrt(nv) * rng.normal(size=40)
        target = build_readout_target(X, y, MlpSpec((3, 1), bias=False), "N(0,1)", noise_var=nv)
        chain = run_chain(target, np.zeros(3), HmcConfig(0.05, 16, 500, 2000, seed=0))
        mean, cov = conjugate_linear_regression(X, y, nv)
        z = np.abs(chain.mean - mean) / (np.sqrt(np.diag(cov)) / np.sqrt(chain.ess))
        q0, p0 = rng.normal(size=3), rng.normal(size=3)
        q1, p1 = leapfrog(q0, p0, 0.05, 50, target.grad)
        q2, p2 = leapfrog(q1, -p1, 0.05, 50, target.grad)
        rev = float(max(np.max(np.abs(q2 - q0)), np.max(np.abs(p2 + p0))))
        acc = run_chain(gaussian_target(2), np.zeros(2), HmcConfig(0.5, 20, 500, 1000, seed=3)).accept_rate
        ok = np.all(z < 3) and rev < 1e-10 and 0.6 <= acc <= 0.95
        return ok, f"max |mean error| {z.max():.2f} sd/sqrt(ESS) (< 3), reversibility {rev:.1e}, acceptance {acc:.2f}"

    gate(acceptance_report, 4, "HMC oracle suite", 120, check)


def test_05_vi_oracle_suite(acceptance_report):
    def check():
        X, y = conjugate_data(n=50)
        m, v = conjugate_posterior(y)
        model = LikelihoodModel(MEAN_SPEC, "N(0,1)", "Unif(0,10)", noise_var=NV, learn_noise=False)
        q = fit_vi(model, X, y, rank=1, steps=4000, lr=1e-2, seed=0, n_mc=64, cov_lr=1e-3).q
        em = abs(q.mean[0] - m) / abs(m)
        ev = abs(q.covariance()[0, 0] - v) / v
        rng = np.random.default_rng(0)
        self_kl = abs(kl_isotropic(LowRankGaussian.from_psi(np.zeros(4), np.zeros((4, 2)), np.ones(4)), 1.0))
        dense = 0.0
        for d in range(1, 6):
            for r in range(1, d + 1):
                g = LowRankGaussian.from_psi(rng.normal(size=d), 0.5 * rng.normal(size=(d, r)),
                                             rng.uniform(0.2, 1.5, d))
                for scale in (1.0, 10.0):
                    dense = max(dense, abs(kl_isotropic(g, scale) - dense_kl_to_isotropic(g.mean, g.covariance(), scale)))
        ok = em < 0.02 and ev < 0.10 and self_kl < 1e-10 and dense < 1e-8
        return ok, (f"mean error {em:.2%} (< 2%), variance error {ev:.2%} (< 10%), "
                    f"KL(q||q) {self_kl:.1e}, dense KL gap {dense:.1e}")

    gate(acceptance_report, 5, "VI oracle suite", 60, check)


def test_06_ssvs_suite(acceptance_report):
    def check():
        rng = np.random.default_rng(0)
        n, p = 200, 50
        X = rng.normal(size=(n, p))
        beta = np.zeros(p)
        idx = rng.choice(p, 5, replace=False)
        beta[idx] = 3 * rng.choice([-1.0, 1.0], 5)
        y = X @ beta + 0.5 * rng.normal(size=n)
        target = build_ssvs_target(X, y)
        chain = run_chain(target, ssvs_init(p, X, y, sigma0=0.5), HmcConfig(0.05, 32, 500, 1000, seed=0))
        m = np.abs(chain.samples[:, :p].mean(axis=0))
        nz = np.zeros(p, dtype=bool)
        nz[idx] = True
        prior = build_ssvs_target(np.zeros((0, 0)), np.zeros(0))
        tau = np.exp(run_chain(prior, np.zeros(2), HmcConfig(0.5, 8, 500, 10_000, seed=0)).samples[:, 0])
        med = float(np.median(tau))
        ok = m[nz].min() > m[~nz].max() and abs(med - 1) <= 0.15
        return ok, (f"smallest true-nonzero |beta| {m[nz].min():.3f} > largest true-zero {m[~nz].max():.3f}, "
                    f"prior tau median {med:.3f}")

    gate(acceptance_report, 6, "SSVS suite", 300, check)


def test_07_metric_suite(acceptance_report):
    def check():
        rng = np.random.default_rng(7)
        crps_gap = 0.0
        for _ in range(200):
            q = np.sort(rng.normal(size=42) * rng.uniform(0.1, 5))
            yv = 3 * rng.normal()
            crps_gap = max(crps_gap, abs(crps_step(q, DEFAULT_LEVELS, yv) - step_cdf_crps_quadrature(q, DEFAULT_LEVELS, yv)))
        perfect = calibration_error(CalibrationCurve(DEFAULT_LEVELS, DEFAULT_LEVELS.copy(), 1))
        T = 10_000
        mu, sd = rng.normal(size=T), rng.uniform(0.5, 2, T)
        _, cov = interval_metrics(gaussian_quantiles(mu, sd), mu + sd * rng.normal(size=T))
        hand = calibration_error(CalibrationCurve(np.array([0.25, 0.75]), np.array([0.75, 0.25]), 4))
        ok = crps_gap < 1e-9 and perfect == 0 and abs(cov - 0.95) <= 0.01 and hand == 0.5
        return ok, f"CRPS vs quadrature {crps_gap:.1e}, perfect cal {perfect}, coverage {cov:.4f}, K=2 example {hand}"

    gate(acceptance_report, 7, "metric suite", 20, check)


def test_08_recalibration_suite(acceptance_report):
    def check():
        results = [overconfident_trial(seed) for seed in range(10)]
        wins = sum(after < before for before, after in results)
        before = np.mean([b for b, _ in results])
        after = np.mean([a for _, a in results])
        return wins >= 9, f"improved in {wins}/10 trials, mean cal {before:.3f} -> {after:.4f}"

    gate(acceptance_report, 8, "recalibration suite", 60, check)


def test_09_method_ordering(acceptance_report, tmp_path):
    def check():
        reports = compare_methods([default_study(m) for m in ("qr", "dropout", "vi") + HMC_METHODS], tmp_path)
        t = {r.config.method: r.train_time()["mean"] for r in reports}
        cal = {r.config.method: r.aggregate()["metrics"]["cal"]["mean"] for r in reports}
        hmc_ratio = min(t[m] for m in HMC_METHODS) / t["qr"]
        fastest = min(t, key=t.get)
        ok = hmc_ratio >= 10 and fastest == "dropout" and cal["qr"] <= cal["dropout"]
        times = ", ".join(f"{m} {v:.2f}s" for m, v in t.items())
        return ok, (f"fastest HMC method takes {hmc_ratio:.0f}x the QR time (>= 10), fastest overall {fastest}, "
                    f"cal qr {cal['qr']:.3f} vs dropout {cal['dropout']:.3f}; times: {times}")

    gate(acceptance_report, 9, "method ordering on the default study", 900, check)


def test_10_determinism(acceptance_report, tmp_path):
    quick_hmc = HmcConfig(n_warmup=100, n_samples=100)

    def check():
        mismatched = []
        for m in ("qr", "dropout", "vi") + HMC_METHODS:
            cfg = default_study(m)
            if m in HMC_METHODS:
                cfg = replace(cfg, hmc=quick_hmc)
            path = tmp_path / f"{m}.json"
            cfg.save(path)
            blobs = []
            for rep in ("a", "b"):
                out = tmp_path / rep
                if cli_main(["run", str(path), "--out", str(out), "--seed", "7"]) != 0:
                    return False, f"run failed for {m}"
                blobs.append((out / f"{m}_metrics.json").read_bytes())
                json.loads(blobs[-1])
            if blobs[0] != blobs[1]:
                mismatched.append(m)
        return not mismatched, "bit-identical metric JSON for all six methods" if not mismatched else f"differs: {mismatched}"

    gate(acceptance_report, 10, "determinism", 300, check)
