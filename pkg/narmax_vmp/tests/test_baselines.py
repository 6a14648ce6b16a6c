import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from estimator.basis import NarmaxConfig, RegressorBuffer, enumerate_monomials, expand, push
from estimator.baselines import (
    export_weights,
    ils_fit,
    predict_point,
    rls_fit,
    rls_init,
    rls_step,
)
from estimator.errors import ConfigurationError, ContractViolationError
from estimator.predict import PointModel, predict_frozen
from experiments.datagen import BENCHMARK_CONFIG


ARX_CONFIG = NarmaxConfig(input_delays=1, output_delays=1, error_delays=0, degree=1, include_constant=True)


def regressor_rows(config, inputs, outputs):
    spec = enumerate_monomials(config)
    buffer = RegressorBuffer.zeros(config)
    rows = []
    for u, y in zip(inputs, outputs):
        rows.append(expand(spec, u, buffer))
        buffer = push(buffer, u, y, 0.0)
    return spec, np.array(rows)


def arx_data(rng, n=200):
    inputs = rng.uniform(-1.0, 1.0, n)
    outputs = np.zeros(n)
    previous_u, previous_y = 0.0, 0.0
    for k, u in enumerate(inputs):
        outputs[k] = 0.1 + 0.5 * u + 0.3 * previous_u - 0.2 * previous_y
        previous_u, previous_y = u, outputs[k]
    return inputs, outputs


class TestRls:
    def test_two_identical_samples(self, scalar_config):
        state = rls_fit([1.0, 1.0], [2.0, 2.0], scalar_config)
        assert state.weights[0] == pytest.approx(2.0, rel=1e-3)
        # forgetting 1 is ridge regression with penalty 1/delta
        assert_allclose(state.weights, [4.0 / (2.0 + 1e-4)], rtol=1e-10)

    def test_matches_ridge_least_squares(self, rng):
        config = NarmaxConfig(input_delays=1, output_delays=1, error_delays=0, degree=2)
        inputs = rng.uniform(-1.0, 1.0, 200)
        outputs = np.sin(inputs) + 0.1 * rng.standard_normal(200)
        spec, phi = regressor_rows(config, inputs, outputs)

        delta = 1e4
        ridge = np.linalg.solve(phi.T @ phi + np.eye(spec.dimension) / delta, phi.T @ outputs)
        state = rls_fit(inputs, outputs, config, delta=delta)
        assert not state.diverged
        assert_allclose(state.weights, ridge, rtol=1e-6, atol=1e-8)

    def test_zero_regressor_leaves_weights_unchanged(self, scalar_config):
        state = rls_fit([1.0], [3.0], scalar_config)
        after = rls_step(state, 0.0, 5.0)
        assert_array_equal(after.weights, state.weights)
        assert_array_equal(after.inverse_correlation, state.inverse_correlation)

    def test_error_history_is_a_priori_error(self):
        config = NarmaxConfig(0, 0, 1, degree=1, include_constant=False)
        state = rls_step(rls_init(config), 1.0, 2.0)
        assert state.last_prediction == 0.0
        assert_array_equal(state.buffer.e_hist, [2.0])

    def test_forgetting_tracks_a_change(self, scalar_config):
        inputs = np.ones(200)
        outputs = np.concatenate([np.full(100, 1.0), np.full(100, 3.0)])
        forgetful = rls_fit(inputs, outputs, scalar_config, forgetting=0.9)
        steady = rls_fit(inputs, outputs, scalar_config)
        assert forgetful.weights[0] == pytest.approx(3.0, rel=1e-3)
        assert steady.weights[0] == pytest.approx(2.0, rel=1e-3)

    def test_overflow_marks_divergence(self):
        state = rls_init(BENCHMARK_CONFIG)
        with np.errstate(all="ignore"):
            state = rls_step(state, 1e120, 1.0)
            assert state.diverged
            assert rls_step(state, 0.5, 0.5) is state

    @pytest.mark.parametrize("delta, forgetting", [(1e4, 0.0), (1e4, 1.5), (0.0, 1.0), (-1.0, 1.0)])
    def test_invalid_settings(self, scalar_config, delta, forgetting):
        with pytest.raises(ConfigurationError):
            rls_init(scalar_config, delta, forgetting)

    def test_length_mismatch(self, scalar_config):
        with pytest.raises(ContractViolationError):
            rls_fit([1.0, 2.0], [1.0], scalar_config)

    def test_as_model(self, scalar_config):
        model = rls_fit([1.0, 1.0], [2.0, 2.0], scalar_config).as_model()
        assert isinstance(model, PointModel)
        assert model.predictive(np.array([1.0])).variance == 0.0


class TestIls:
    def test_recovers_noiseless_arx(self, rng):
        inputs, outputs = arx_data(rng)
        model = ils_fit(inputs, outputs, ARX_CONFIG)
        spec = model.spec
        expected = np.zeros(spec.dimension)
        expected[spec.index_of((0, 0, 0))] = 0.1
        expected[spec.index_of((1, 0, 0))] = 0.5
        expected[spec.index_of((0, 1, 0))] = 0.3
        expected[spec.index_of((0, 0, 1))] = -0.2
        assert_allclose(model.weights, expected, atol=1e-10)
        assert not model.rank_deficient
        assert not model.diverged

    def test_refinements_are_no_ops_without_error_terms(self, rng):
        inputs = rng.uniform(-1.0, 1.0, 100)
        outputs = inputs ** 2 + 0.05 * rng.standard_normal(100)
        config = NarmaxConfig(1, 1, 0, degree=2)
        single = ils_fit(inputs, outputs, config, n_refinements=0)
        refined = ils_fit(inputs, outputs, config, n_refinements=10)
        assert_allclose(refined.weights, single.weights, rtol=1e-12, atol=1e-14)
        assert refined.n_refinements == 1

    def test_benchmark_residuals_near_noise_level(self, benchmark_data):
        _, inputs, outputs = benchmark_data
        model = ils_fit(inputs, outputs, BENCHMARK_CONFIG)
        assert not model.diverged
        assert 1 <= model.n_refinements <= 10
        assert len(model.residual_history) >= 1
        assert model.residual_history[-1] < 0.1

    def test_short_signal_is_rank_deficient(self, benchmark_data):
        _, inputs, outputs = benchmark_data
        model = ils_fit(inputs[:5], outputs[:5], BENCHMARK_CONFIG, n_refinements=0)
        assert model.rank_deficient
        assert np.all(np.isfinite(model.weights))

    def test_frozen_prediction_of_recovered_model(self, rng):
        inputs, outputs = arx_data(rng)
        model = ils_fit(inputs, outputs, ARX_CONFIG)
        result = predict_frozen(model.as_model(), inputs, outputs)
        assert_allclose(result.predictions, outputs, atol=1e-9)

    def test_length_mismatch(self, scalar_config):
        with pytest.raises(ContractViolationError):
            ils_fit([1.0, 2.0], [1.0], scalar_config)

    def test_to_dict(self, rng):
        inputs, outputs = arx_data(rng, 50)
        data = ils_fit(inputs, outputs, ARX_CONFIG).to_dict()
        assert set(data) == {"basis", "terms", "weights", "n_refinements", "residual_history", "rank_deficient", "diverged"}


class TestPointHelpers:
    def test_predict_point(self, scalar_config):
        spec = enumerate_monomials(scalar_config)
        assert predict_point(np.array([2.0]), spec, RegressorBuffer.zeros(scalar_config), 3.0) == 6.0

    def test_predict_point_with_history(self):
        spec = enumerate_monomials(ARX_CONFIG)
        weights = np.arange(1.0, spec.dimension + 1.0)
        buffer = RegressorBuffer([2.0], [-1.0], [])
        phi = expand(spec, 0.5, buffer)
        assert predict_point(weights, spec, buffer, 0.5) == pytest.approx(float(weights @ phi))

    def test_export_weights(self, benchmark_spec):
        data = export_weights(np.arange(benchmark_spec.dimension, dtype=float), benchmark_spec)
        assert data["terms"][0] == "1"
        assert len(data["terms"]) == len(data["weights"]) == 23
        assert "e[k-1]^3" in data["terms"]
        assert data["weights"][5] == 5.0
