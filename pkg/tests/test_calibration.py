import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcprob.calibration import (
    CalibrationMap,
    RecalibrationError,
    apply_recalibrator,
    fit_recalibrator,
    isotonic_fit,
    recalibrated_levels,
)
from rcprob.forecast import DEFAULT_LEVELS, EnsembleForecast, QuantileForecast
from rcprob.metrics import CalibrationCurve, calibration_curve, calibration_error


def brute_isotonic(y):
    """Exhaustive check target: minimise squared error over non-decreasing fits by
    projecting onto the cone with a long run of pairwise averaging sweeps."""
    f = np.array(y, dtype=float)
    for _ in range(10_000):
        changed = False
        i = 0
        while i < f.size - 1:
            if f[i] > f[i + 1] + 1e-15:
                j = i + 1
                while j + 1 < f.size and f[j + 1] == f[i + 1]:
                    j += 1
                k = i
                while k > 0 and f[k - 1] == f[i]:
                    k -= 1
                f[k : j + 1] = f[k : j + 1].mean()
                changed = True
            i += 1
        if not changed:
            break
    return f


def overconfident_trial(seed, n_cal=2000, n_test=2000, m=300):
    """Forecaster with half the true spread: truths ~ N(mu, 1), samples ~ N(mu, 0.25)."""
    rng = np.random.default_rng(seed)

    def make(n):
        mu = rng.normal(size=n)
        return EnsembleForecast(mu[:, None] + 0.5 * rng.normal(size=(n, m))), mu + rng.normal(size=n)

    cal_fc, cal_y = make(n_cal)
    test_fc, test_y = make(n_test)
    cmap = fit_recalibrator(calibration_curve(cal_fc, cal_y))
    before = calibration_error(calibration_curve(test_fc, test_y))
    after = calibration_error(calibration_curve(apply_recalibrator(cmap, test_fc), test_y))
    return before, after


class TestIsotonic:
    def test_sorted_input_unchanged(self):
        y = np.array([0.1, 0.2, 0.2, 0.9])
        np.testing.assert_array_equal(isotonic_fit(np.arange(4), y), y)

    def test_single_violation(self):
        np.testing.assert_allclose(isotonic_fit(np.arange(3), [1.0, 3.0, 2.0]), [1.0, 2.5, 2.5])

    def test_weights(self):
        np.testing.assert_allclose(isotonic_fit(np.arange(2), [2.0, 0.0], [3.0, 1.0]), [1.5, 1.5])

    def test_respects_x_order(self):
        np.testing.assert_allclose(isotonic_fit([2, 0, 1], [3.0, 1.0, 2.0]), [3.0, 1.0, 2.0])
        np.testing.assert_allclose(isotonic_fit([2, 0, 1], [0.0, 1.0, 3.0]), [1.5, 1.0, 1.5])

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
    def test_monotone_and_matches_brute_force(self, y):
        fit = isotonic_fit(np.arange(len(y)), y)
        assert np.all(np.diff(fit) >= -1e-12)
        np.testing.assert_allclose(fit, brute_isotonic(y), atol=1e-9)
        assert fit.sum() == pytest.approx(sum(y), abs=1e-9)


class TestCalibrationMap:
    def test_identity_for_calibrated_curve(self):
        cmap = fit_recalibrator(CalibrationCurve(DEFAULT_LEVELS, DEFAULT_LEVELS.copy(), 100))
        np.testing.assert_allclose(cmap(DEFAULT_LEVELS), DEFAULT_LEVELS, atol=1e-10)
        np.testing.assert_allclose(cmap.inverse(DEFAULT_LEVELS), DEFAULT_LEVELS, atol=1e-10)

    @given(st.lists(st.floats(0, 1), min_size=42, max_size=42))
    def test_monotone_with_pinned_ends(self, emp):
        cmap = fit_recalibrator(CalibrationCurve(DEFAULT_LEVELS, np.array(emp), 10))
        grid = np.linspace(0, 1, 501)
        assert np.all(np.diff(cmap(grid)) >= -1e-12)
        assert cmap(0.0) == 0.0 and cmap(1.0) == 1.0
        inv = recalibrated_levels(cmap, DEFAULT_LEVELS)
        assert np.all(np.diff(inv) >= -1e-12)
        assert np.all((inv >= 0) & (inv <= 1))

    @given(st.lists(st.floats(0, 1), min_size=42, max_size=42))
    def test_fit_optimality(self, emp):
        emp = np.array(emp)
        cmap = fit_recalibrator(CalibrationCurve(DEFAULT_LEVELS, emp, 10))
        resid = np.max(np.abs(cmap(DEFAULT_LEVELS) - emp))
        assert resid <= np.max(np.abs(isotonic_fit(DEFAULT_LEVELS, emp) - emp)) + 1e-12

    def test_generalised_inverse(self):
        cmap = CalibrationMap(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.25, 1.0]))
        assert cmap.inverse(0.125) == pytest.approx(0.25)
        assert cmap.inverse(0.625) == pytest.approx(0.75)
        flat = CalibrationMap(np.array([0.0, 0.2, 0.6, 1.0]), np.array([0.0, 0.5, 0.5, 1.0]))
        assert flat.inverse(0.5) == pytest.approx(0.2)  # smallest tau reaching the level

    def test_to_dict(self):
        d = fit_recalibrator(CalibrationCurve(np.array([0.5]), np.array([0.6]), 5), source="cal").to_dict()
        assert d["source"] == "cal" and d["knots_x"] == [0.0, 0.5, 1.0]


class TestApply:
    def test_quantile_forecast_rejected(self):
        cmap = fit_recalibrator(CalibrationCurve(DEFAULT_LEVELS, DEFAULT_LEVELS.copy(), 1))
        with pytest.raises(RecalibrationError):
            apply_recalibrator(cmap, QuantileForecast(np.zeros((2, 42)), DEFAULT_LEVELS))
        with pytest.raises(TypeError):
            apply_recalibrator(cmap, np.zeros((2, 5)))

    def test_identity_map_keeps_quantiles(self, rng):
        cmap = fit_recalibrator(CalibrationCurve(DEFAULT_LEVELS, DEFAULT_LEVELS.copy(), 1))
        ens = EnsembleForecast(rng.normal(size=(10, 200)))
        out = apply_recalibrator(cmap, ens)
        ref = np.quantile(ens.samples, DEFAULT_LEVELS, axis=1).T
        np.testing.assert_allclose(out.values, ref, atol=1e-10)
        np.testing.assert_array_equal(out.levels, DEFAULT_LEVELS)

    def test_overconfident_forecaster_improves(self):
        results = [overconfident_trial(seed) for seed in range(10)]
        assert sum(after < before for before, after in results) >= 9
