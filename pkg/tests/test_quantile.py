import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcprob.forecast import DEFAULT_LEVELS, QuantileForecast, check_levels
from rcprob.mlp import Mlp, MlpSpec, OptimizerConfig
from rcprob.quantile import QuantileModel, pinball_loss, predict_quantiles, train_qr

taus = st.floats(0.001, 0.999)
reals = st.floats(-1e3, 1e3, allow_nan=False)


class TestPinball:
    def test_hand_values(self):
        assert pinball_loss(1.0, 0.9) == pytest.approx(0.9)
        assert pinball_loss(-1.0, 0.9) == pytest.approx(0.1)

    @given(taus)
    def test_zero_residual(self, tau):
        assert pinball_loss(0.0, tau) == 0.0

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.2, 1.5])
    def test_invalid_level(self, tau):
        with pytest.raises(ValueError):
            pinball_loss(1.0, tau)

    @given(reals, reals, st.floats(0, 1), taus)
    def test_convex(self, a, b, lam, tau):
        lhs = pinball_loss(lam * a + (1 - lam) * b, tau)
        rhs = lam * pinball_loss(a, tau) + (1 - lam) * pinball_loss(b, tau)
        assert lhs <= rhs + 1e-9 * (1 + abs(a) + abs(b))

    @given(reals, taus)
    def test_non_negative(self, r, tau):
        assert pinball_loss(r, tau) >= 0

    @pytest.mark.parametrize("tau", [0.1, 0.3, 0.5, 0.9])
    def test_constant_minimiser_is_sample_quantile(self, rng, tau):
        y = rng.normal(size=301)
        grid = np.linspace(-3, 3, 6001)
        losses = [np.mean(pinball_loss(y - c, tau)) for c in grid]
        best = grid[int(np.argmin(losses))]
        # the minimiser set is an order statistic (or the segment between two)
        ys = np.sort(y)
        k = int(np.ceil(tau * y.size)) - 1
        assert ys[max(k - 1, 0)] - 1e-3 <= best <= ys[min(k + 1, y.size - 1)] + 1e-3


class TestLevels:
    def test_default_grid(self):
        assert DEFAULT_LEVELS.size == 42
        assert np.all(np.diff(DEFAULT_LEVELS) > 0)
        for t in (0.025, 0.5, 0.975):
            assert np.any(np.isclose(DEFAULT_LEVELS, t, atol=1e-12))
        assert DEFAULT_LEVELS[0] > 0 and DEFAULT_LEVELS[-1] < 1

    @pytest.mark.parametrize("bad", [[], [0.5, 0.4], [0.0, 0.5], [0.5, 1.0], [0.3, 0.3]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            check_levels(bad)


class TestTraining:
    def test_constant_target(self, rng):
        X = rng.normal(size=(200, 3))
        y = np.full(200, 2.5)
        levels = [0.1, 0.5, 0.9]
        spec = MlpSpec.build(3, [], 3)
        model = train_qr(spec, X, y, levels, OptimizerConfig(lr=1e-4, steps=40000))
        out = predict_quantiles(model, X).values
        np.testing.assert_allclose(out, 2.5, atol=1e-3)

    def test_gaussian_quantiles(self, rng):
        y = rng.normal(size=5000)
        X = np.ones((5000, 1))
        levels = np.array([0.1, 0.5, 0.9])
        model = train_qr(MlpSpec.build(1, [], 3), X, y, levels, OptimizerConfig(lr=1e-2, steps=1500))
        q = predict_quantiles(model, X[:1]).values[0]
        np.testing.assert_allclose(q, np.quantile(y, levels), atol=0.05)

    def test_output_width_must_match(self, rng):
        with pytest.raises(ValueError):
            train_qr(MlpSpec.build(2, [], 2), np.ones((5, 2)), np.ones(5), [0.1, 0.5, 0.9])

    def test_deterministic(self, rng):
        X, y = rng.normal(size=(60, 2)), rng.normal(size=60)
        spec = MlpSpec.build(2, [4], 3, "relu")
        opt = OptimizerConfig(lr=1e-2, steps=40, seed=2)
        a = train_qr(spec, X, y, [0.1, 0.5, 0.9], opt)
        b = train_qr(spec, X, y, [0.1, 0.5, 0.9], opt)
        assert a.mlp.params.tobytes() == b.mlp.params.tobytes()
        assert a.loss_trace.size == 40


class TestPrediction:
    def test_non_crossing(self, rng):
        spec = MlpSpec.build(3, [5], 6, "tanh")
        model = QuantileModel(Mlp(spec, rng.normal(size=spec.n_params)), np.linspace(0.1, 0.9, 6))
        out = predict_quantiles(model, rng.normal(size=(100, 3)))
        assert np.all(np.diff(out.values, axis=1) >= 0)

    def test_zero_weights_flat_band(self, rng):
        spec = MlpSpec.build(3, [4], 3)
        p = np.zeros(spec.n_params)
        p[-3:] = [0.7, -0.2, 0.1]  # output biases
        model = QuantileModel(Mlp(spec, p), np.array([0.1, 0.5, 0.9]))
        out = predict_quantiles(model, rng.normal(size=(10, 3))).values
        np.testing.assert_array_equal(out, np.tile([-0.2, 0.1, 0.7], (10, 1)))

    def test_median_column(self, rng):
        spec = MlpSpec.build(2, [], 3)
        model = QuantileModel(Mlp(spec, rng.normal(size=spec.n_params)), np.array([0.1, 0.5, 0.9]))
        out = predict_quantiles(model, rng.normal(size=(8, 2)))
        np.testing.assert_array_equal(out.median, out.values[:, 1])


class TestQuantileForecast:
    def test_csv_roundtrip(self, tmp_path, rng):
        f = QuantileForecast(np.sort(rng.normal(size=(5, 42)), axis=1), DEFAULT_LEVELS)
        f.to_csv(tmp_path / "q.csv")
        header = (tmp_path / "q.csv").read_text().splitlines()[0].split(",")
        assert [float(h) for h in header] == DEFAULT_LEVELS.tolist()
        back = QuantileForecast.from_csv(tmp_path / "q.csv")
        np.testing.assert_array_equal(back.values, f.values)

    def test_missing_level(self):
        f = QuantileForecast(np.zeros((2, 2)), [0.1, 0.9])
        with pytest.raises(KeyError):
            f.median

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            QuantileForecast(np.zeros((2, 3)), [0.1, 0.9])
