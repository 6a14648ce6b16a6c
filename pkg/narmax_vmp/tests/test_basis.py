import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from estimator.basis import (
    BasisSpec,
    NarmaxConfig,
    RegressorBuffer,
    describe_monomial,
    enumerate_monomials,
    expand,
    push,
)
from estimator.errors import ConfigurationError, ContractViolationError, NonFiniteSignalError


def exhaustive_count(n_variables, degree, n_error, constant=True, cross=False):
    count = 0
    for exponent in itertools.product(range(degree + 1), repeat=n_variables):
        total = sum(exponent)
        if total > degree or (total == 0 and not constant):
            continue
        errors = exponent[n_variables - n_error:]
        if not cross and any(errors) and sum(1 for x in exponent if x) > 1:
            continue
        count += 1
    return count


class TestEnumerateMonomials:
    def test_input_only_linear(self):
        spec = enumerate_monomials(NarmaxConfig(0, 0, 0, degree=1))
        assert spec.exponents == ((0,), (1,))
        assert spec.dimension == 2

    def test_benchmark_dimension(self):
        assert enumerate_monomials(NarmaxConfig(1, 1, 1, 3)).dimension == 23

    def test_with_error_cross_terms(self):
        assert enumerate_monomials(NarmaxConfig(1, 1, 1, 3, error_cross_terms=True)).dimension == 35

    @pytest.mark.parametrize("delays, degree, constant, cross", [
        ((2, 1, 1), 2, True, False),
        ((1, 2, 2), 3, False, False),
        ((2, 2, 0), 3, True, True),
        ((0, 1, 3), 2, True, False),
    ])
    def test_matches_exhaustive_count(self, delays, degree, constant, cross):
        config = NarmaxConfig(*delays, degree=degree, include_constant=constant, error_cross_terms=cross)
        expected = exhaustive_count(config.n_variables, degree, delays[2], constant, cross)
        assert enumerate_monomials(config).dimension == expected

    def test_graded_order(self, benchmark_spec):
        degrees = [sum(e) for e in benchmark_spec.exponents]
        assert degrees == sorted(degrees)
        assert benchmark_spec.exponents[0] == (0, 0, 0, 0)
        assert len(set(benchmark_spec.exponents)) == benchmark_spec.dimension

    def test_no_error_mixing(self, benchmark_spec):
        for exponent in benchmark_spec.exponents:
            if exponent[3]:
                assert exponent[:3] == (0, 0, 0)
        for power in (1, 2, 3):
            assert (0, 0, 0, power) in benchmark_spec.exponents

    def test_without_constant(self):
        spec = enumerate_monomials(NarmaxConfig(1, 1, 1, 2, include_constant=False))
        assert (0, 0, 0, 0) not in spec.exponents

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            NarmaxConfig(input_delays=-1)
        with pytest.raises(ConfigurationError):
            NarmaxConfig(degree=0)

    @pytest.mark.parametrize("data", [
        {"degree": "three"},
        {"degree": 2.5},
        {"input_delays": None},
        {"output_delays": [1]},
        {"include_constant": "yes"},
        {"error_cross_terms": 1},
    ])
    def test_mistyped_config(self, data):
        with pytest.raises(ConfigurationError):
            NarmaxConfig.from_dict(data)

    def test_integral_values_are_normalised(self):
        config = NarmaxConfig.from_dict({"degree": "2", "input_delays": 2.0})
        assert config == NarmaxConfig(input_delays=2, degree=2)
        assert isinstance(config.input_delays, int)
        with pytest.raises(ConfigurationError):
            NarmaxConfig.from_dict([("degree", 2)])

    def test_spec_dict_round_trip(self, benchmark_spec):
        assert BasisSpec.from_dict(benchmark_spec.to_dict()) == benchmark_spec

    def test_spec_rejects_mismatched_exponents(self, benchmark_spec):
        data = benchmark_spec.to_dict()
        data["exponents"] = data["exponents"][::-1]
        with pytest.raises(ConfigurationError):
            BasisSpec.from_dict(data)


class TestDescribeMonomial:
    def test_names(self, benchmark_spec):
        assert describe_monomial(benchmark_spec, 0) == "1"
        assert describe_monomial(benchmark_spec, benchmark_spec.index_of((1, 0, 2, 0))) == "u[k]*y[k-1]^2"
        assert describe_monomial(benchmark_spec, benchmark_spec.index_of((0, 0, 0, 3))) == "e[k-1]^3"


class TestExpand:
    def test_zero_signals(self, benchmark_spec):
        buffer = RegressorBuffer.zeros(benchmark_spec.config)
        phi = expand(benchmark_spec, 0.0, buffer)
        expected = np.zeros(benchmark_spec.dimension)
        expected[0] = 1.0
        assert_array_equal(phi, expected)

    def test_two_term_basis(self):
        spec = enumerate_monomials(NarmaxConfig(0, 0, 0, degree=1))
        assert_array_equal(expand(spec, 2.0, RegressorBuffer.zeros(spec.config)), [1.0, 2.0])

    def test_hand_evaluated_monomial(self, benchmark_spec):
        buffer = RegressorBuffer([1.0], [3.0], [0.5])
        phi = expand(benchmark_spec, 2.0, buffer)
        assert phi[benchmark_spec.index_of((1, 0, 2, 0))] == 18.0
        # generic exponent-product oracle
        x = np.array([2.0, 1.0, 3.0, 0.5])
        oracle = [np.prod([xi ** p for xi, p in zip(x, e)]) for e in benchmark_spec.exponents]
        assert_allclose(phi, oracle, rtol=1e-15)

    @pytest.mark.parametrize("config", [
        NarmaxConfig(1, 1, 1, 3),
        NarmaxConfig(2, 3, 1, 2, error_cross_terms=True),
        NarmaxConfig(0, 2, 0, 4, include_constant=False),
    ])
    def test_all_ones_signals(self, config):
        spec = enumerate_monomials(config)
        buffer = RegressorBuffer(np.ones(config.input_delays), np.ones(config.output_delays), np.ones(config.error_delays))
        assert_array_equal(expand(spec, 1.0, buffer), np.ones(spec.dimension))

    @pytest.mark.parametrize("config", [
        NarmaxConfig(1, 1, 1, 3),
        NarmaxConfig(2, 3, 1, 2, error_cross_terms=True),
        NarmaxConfig(0, 2, 0, 4, include_constant=False),
    ])
    def test_scaling_signals_scales_monomials_by_degree(self, config, rng):
        spec = enumerate_monomials(config)
        degrees = np.array([sum(e) for e in spec.exponents])
        for _ in range(20):
            u = rng.standard_normal()
            histories = [rng.standard_normal(n) for n in (config.input_delays, config.output_delays, config.error_delays)]
            s = rng.uniform(0.2, 3.0)
            phi = expand(spec, u, RegressorBuffer(*histories))
            scaled = expand(spec, s * u, RegressorBuffer(*(s * h for h in histories)))
            assert_allclose(scaled, s ** degrees * phi, rtol=1e-12)

    def test_buffer_shape_mismatch(self, benchmark_spec):
        with pytest.raises(ContractViolationError):
            expand(benchmark_spec, 0.0, RegressorBuffer([0.0, 0.0], [0.0], [0.0]))

    def test_non_finite_input(self, benchmark_spec):
        with pytest.raises(NonFiniteSignalError):
            expand(benchmark_spec, np.nan, RegressorBuffer.zeros(benchmark_spec.config))


class TestPush:
    def test_single_delay(self):
        buffer = push(RegressorBuffer.zeros(NarmaxConfig(1, 1, 1)), 5.0, 0.0, 0.0)
        assert_array_equal(buffer.u_hist, [5.0])

    def test_shift_semantics(self):
        buffer = push(RegressorBuffer([0.0], [1.0, 2.0], [0.0]), 0.0, 3.0, 0.0)
        assert_array_equal(buffer.y_hist, [3.0, 1.0])

    def test_zero_error_delay(self):
        buffer = push(RegressorBuffer.zeros(NarmaxConfig(1, 1, 0)), 1.0, 2.0, 3.0)
        assert buffer.e_hist.size == 0

    def test_push_is_pure(self):
        original = RegressorBuffer([1.0], [2.0], [3.0])
        push(original, 4.0, 5.0, 6.0)
        assert_array_equal(original.u_hist, [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteSignalError):
            push(RegressorBuffer.zeros(NarmaxConfig()), 0.0, np.inf, 0.0)
