import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from estimator.baselines import rls_fit
from estimator.beliefs import GammaBelief, isotropic_prior
from estimator.errors import ConfigurationError, ContractViolationError
from estimator.predict import one_step_sequence
from estimator.vmp import VmpSettings, initial_state
from experiments.harness import (
    _online_models,
    AGGREGATE_COLUMNS,
    ExperimentPlan,
    RunRecord,
    VmpPriors,
    aggregate,
    aggregates_frame,
    preset_plan,
    records_frame,
    rms,
    run_plan,
    run_realization,
    write_table,
)


def record(value, estimator="vmp", realization=0, failed=False, sim=None, pred=None):
    sim = value if sim is None else sim
    pred = value if pred is None else pred
    if failed:
        sim = pred = math.nan
    return RunRecord(estimator, 16, realization, sim, pred, failed)


def small_plan(**overrides):
    kwargs = dict(
        training_lengths=[16, 32],
        n_realizations=3,
        validation_length=40,
        base_seed=5,
    )
    kwargs.update(overrides)
    return ExperimentPlan(**kwargs)


class TestRms:
    def test_values(self):
        assert rms([3.0, -3.0]) == 3.0
        assert rms([1.0, 1.0, 1.0, 1.0]) == 1.0
        assert_allclose(rms([1.0, 2.0, 2.0]), math.sqrt(3.0))

    def test_empty(self):
        with pytest.raises(ContractViolationError):
            rms([])


class TestAggregate:
    def test_mean_and_sem(self):
        [row] = aggregate([record(1.0, realization=0), record(3.0, realization=1)])
        assert row.mean_rms_simulation == 2.0
        assert row.sem_rms_simulation == pytest.approx(1.0)
        assert row.failure_proportion == 0.0
        assert row.n_runs == 2

    def test_single_run_has_zero_sem(self):
        [row] = aggregate([record(0.7)])
        assert row.mean_rms_prediction == 0.7
        assert row.sem_rms_prediction == 0.0

    def test_failures_excluded_and_counted(self):
        records = [record(1.0, realization=i) for i in range(8)]
        records += [record(0.0, realization=i, failed=True) for i in (8, 9)]
        [row] = aggregate(records)
        assert row.failure_proportion == pytest.approx(0.2)
        assert row.mean_rms_simulation == 1.0
        assert row.n_failed == 2

    def test_all_failed_cell(self):
        [row] = aggregate([record(0.0, failed=True), record(0.0, realization=1, failed=True)])
        assert row.mean_rms_simulation is None
        assert row.sem_rms_prediction is None
        assert row.failure_proportion == 1.0

    def test_cells_keep_first_seen_order(self):
        records = [record(1.0, "rls"), record(1.0, "vmp"), record(2.0, "rls", 1)]
        assert [r.estimator for r in aggregate(records)] == ["rls", "vmp"]

    def test_frame_writes_missing_values_as_empty(self, tmp_path):
        frame = aggregates_frame(aggregate([record(0.0, failed=True)]))
        assert list(frame.columns) == AGGREGATE_COLUMNS
        path = tmp_path / "aggregates.csv"
        write_table(frame, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(AGGREGATE_COLUMNS)
        assert lines[1] == "16,vmp,,,,,1,1"


class TestExperimentPlan:
    def test_defaults(self):
        plan = ExperimentPlan()
        assert plan.n_realizations == 50
        assert plan.validation_length == 1000
        assert plan.sweep_values() == [16, 32, 64, 128, 256, 512, 1024]
        assert plan.cell(64) == (64, 0.02)

    def test_noise_sweep_cells(self):
        plan = ExperimentPlan(mode="noise_sweep", training_lengths=[128], noise_stds=[0.01, 0.5])
        assert plan.sweep_values() == [0.01, 0.5]
        assert plan.cell(0.5) == (128, 0.5)

    @pytest.mark.parametrize("kwargs", [
        {"mode": "grid"},
        {"noise_stds": [0.01, 0.02]},
        {"mode": "noise_sweep", "training_lengths": [16, 32]},
        {"training_lengths": [0]},
        {"noise_stds": [-0.1]},
        {"n_realizations": 0},
        {"validation_length": 0},
        {"estimators": []},
        {"estimators": ["vmp", "kalman"]},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentPlan(**kwargs)

    def test_dict_round_trip(self):
        plan = small_plan(vmp_priors=VmpPriors(shape=2.0, rate=1.0))
        restored = ExperimentPlan.from_dict(plan.to_dict())
        assert restored.to_dict() == plan.to_dict()
        assert restored.vmp_priors.shape == 2.0

    def test_from_dict_partial(self):
        plan = ExperimentPlan.from_dict({"training_lengths": [8], "n_realizations": 2, "vmp": {"n_iterations": 3}})
        assert plan.vmp.n_iterations == 3
        assert plan.noise_stds == [0.02]

    @pytest.mark.parametrize("data", [
        {"realizations": 3},
        {"vmp_priors": {"scale": 1.0}},
        [1, 2, 3],
    ])
    def test_from_dict_rejects(self, data):
        with pytest.raises(ConfigurationError):
            ExperimentPlan.from_dict(data)

    @pytest.mark.parametrize("data", [
        {"training_lengths": ["many"]},
        {"training_lengths": 16},
        {"training_lengths": [16.5]},
        {"noise_stds": ["low"]},
        {"n_realizations": "two"},
        {"base_seed": None},
        {"rls_delta": 0.0},
        {"vmp_priors": {"shape": "ten"}},
        {"vmp_priors": {"precision": 0.0}},
        {"vmp_priors": 3},
        {"model": {"degree": "cubic"}},
    ])
    def test_from_dict_rejects_mistyped_values(self, data):
        with pytest.raises(ConfigurationError):
            ExperimentPlan.from_dict(data)

    def test_from_dict_normalises_numbers(self):
        plan = ExperimentPlan.from_dict({"training_lengths": ["16", 32.0], "n_realizations": "2"})
        assert plan.training_lengths == [16, 32]
        assert plan.n_realizations == 2
        assert plan.sweep_values() == [16, 32]

    def test_presets(self):
        assert preset_plan("experiment1").noise_stds == [0.02]
        assert preset_plan("experiment1_prediction").noise_stds == [0.2]
        plan = preset_plan("experiment2", n_realizations=4)
        assert plan.mode == "noise_sweep"
        assert plan.training_lengths == [128]
        assert plan.n_realizations == 4
        with pytest.raises(ConfigurationError):
            preset_plan("experiment3")


class TestRunPlan:
    def test_single_record(self):
        plan = ExperimentPlan(training_lengths=[64], n_realizations=1, validation_length=50, estimators=["vmp"])
        [run] = run_plan(plan)
        assert run.estimator == "vmp"
        assert run.sweep_value == 64
        assert not run.failed
        assert math.isfinite(run.rms_simulation) and math.isfinite(run.rms_prediction)

    def test_order_and_count(self):
        plan = small_plan()
        records = run_plan(plan)
        assert len(records) == 2 * 3 * 3
        keys = [(r.sweep_value, r.estimator, r.realization) for r in records]
        expected = [(v, e, r) for v in (16, 32) for e in ("vmp", "rls", "ils") for r in range(3)]
        assert keys == expected

    def test_independent_of_worker_count(self):
        plan = small_plan()
        serial = records_frame(run_plan(plan, jobs=1))
        threaded = records_frame(run_plan(plan, jobs=3))
        pd.testing.assert_frame_equal(serial, threaded)

    def test_realization_covers_each_length(self):
        plan = small_plan(estimators=["ils"], n_realizations=1, training_lengths=[200, 400])
        records = run_realization(plan, 0)
        assert [r.sweep_value for r in records] == [200, 400]

    @pytest.mark.parametrize("lengths", [[16], [16, 40, 75]])
    def test_online_snapshots_equal_fresh_fits(self, benchmark_data, lengths):
        _, inputs, outputs = benchmark_data
        plan = small_plan(vmp=VmpSettings(n_iterations=4))

        vmp_models = _online_models("vmp", plan, inputs, outputs, lengths)
        rls_models = _online_models("rls", plan, inputs, outputs, lengths)
        for n in lengths:
            prior = initial_state(
                plan.model,
                isotropic_prior(23, plan.vmp_priors.mean, plan.vmp_priors.precision),
                GammaBelief(plan.vmp_priors.shape, plan.vmp_priors.rate),
            )
            _, state = one_step_sequence(prior, inputs[:n], outputs[:n], plan.vmp)
            assert_allclose(vmp_models[n].mean, state.theta.mean(), rtol=1e-12, atol=1e-14)
            assert_allclose(vmp_models[n].cholesky, state.theta.cholesky, rtol=1e-12, atol=1e-14)

            fitted = rls_fit(inputs[:n], outputs[:n], plan.model, delta=plan.rls_delta)
            assert_allclose(rls_models[n].weights, fitted.weights, rtol=1e-12, atol=1e-14)

    def test_base_seed_changes_records(self):
        a = records_frame(run_plan(small_plan(estimators=["vmp"])))
        b = records_frame(run_plan(small_plan(estimators=["vmp"], base_seed=6)))
        assert not np.allclose(a["rms_sim"], b["rms_sim"])

    def test_records_frame_columns(self, tmp_path):
        frame = records_frame([record(0.5), record(0.0, realization=1, failed=True)])
        assert list(frame.columns) == ["sweep_value", "estimator", "realization", "rms_sim", "rms_pred", "failed"]
        path = tmp_path / "records.csv"
        write_table(frame, path)
        assert path.read_text().splitlines()[1:] == ["16,vmp,0,0.5,0.5,0", "16,vmp,1,,,1"]


@pytest.mark.slow
class TestDeskAcceptance:
    def test_simulation_error_falls_with_training_length(self):
        plan = preset_plan(
            "experiment1",
            training_lengths=[32, 512],
            n_realizations=5,
            validation_length=300,
        )
        rows = {(r.sweep_value, r.estimator): r for r in aggregate(run_plan(plan, jobs=2))}
        short, long = rows[(32, "vmp")], rows[(512, "vmp")]
        assert long.failure_proportion == 0.0
        assert long.mean_rms_simulation < short.mean_rms_simulation

    def test_prediction_error_grows_with_noise(self):
        plan = preset_plan(
            "experiment2",
            noise_stds=[0.01, 0.5],
            n_realizations=5,
            validation_length=300,
        )
        rows = {(r.sweep_value, r.estimator): r for r in aggregate(run_plan(plan, jobs=2))}
        for estimator in ("vmp", "rls"):
            quiet, loud = rows[(0.01, estimator)], rows[(0.5, estimator)]
            if quiet.mean_rms_prediction is None or loud.mean_rms_prediction is None:
                continue
            assert loud.mean_rms_prediction > quiet.mean_rms_prediction
        loud_vmp = rows[(0.5, "vmp")]
        if loud_vmp.mean_rms_prediction is not None:
            assert loud_vmp.mean_rms_prediction >= 0.4


def aggregate_rows(plan):
    return {(row.sweep_value, row.estimator): row for row in aggregate(run_plan(plan, jobs=4))}


@pytest.fixture(scope="module")
def sample_sweep_rows():
    """Full-scale training-length sweep: 50 realizations, noise std 0.02, validation length 1000."""
    return aggregate_rows(preset_plan("experiment1"))


@pytest.fixture(scope="module")
def noise_sweep_rows():
    """Full-scale noise sweep at training length 128."""
    return aggregate_rows(preset_plan("experiment2"))


def simulation_rms(row):
    return math.inf if row.mean_rms_simulation is None else row.mean_rms_simulation


@pytest.mark.slow
class TestBenchmarkAcceptance:
    def test_vmp_beats_rls_on_short_records(self, sample_sweep_rows):
        for n in (16, 32, 64, 128, 256):
            vmp, rls = sample_sweep_rows[(n, "vmp")], sample_sweep_rows[(n, "rls")]
            assert vmp.mean_rms_simulation is not None, n
            assert simulation_rms(vmp) <= simulation_rms(rls), n

    def test_estimators_agree_on_long_records(self, sample_sweep_rows):
        errors = [simulation_rms(sample_sweep_rows[(1024, name)]) for name in ("vmp", "rls", "ils")]
        assert all(math.isfinite(e) for e in errors), errors
        assert max(errors) <= 2.0 * min(errors), errors

    def test_failure_proportions(self, sample_sweep_rows):
        ils_short, ils_long = sample_sweep_rows[(16, "ils")], sample_sweep_rows[(1024, "ils")]
        assert ils_short.failure_proportion > ils_long.failure_proportion
        for n in (16, 32, 64, 128, 256, 512, 1024):
            vmp, ils = sample_sweep_rows[(n, "vmp")], sample_sweep_rows[(n, "ils")]
            assert vmp.failure_proportion <= ils.failure_proportion, n

    def test_vmp_gain_over_rls_is_largest_at_low_noise(self, noise_sweep_rows):
        noise_levels = preset_plan("experiment2").noise_stds
        gaps = []
        for noise_std in noise_levels:
            vmp, rls = noise_sweep_rows[(noise_std, "vmp")], noise_sweep_rows[(noise_std, "rls")]
            assert vmp.mean_rms_simulation is not None, noise_std
            assert simulation_rms(vmp) <= simulation_rms(rls), noise_std
            rls_rms = simulation_rms(rls)
            gaps.append(1.0 if math.isinf(rls_rms) else (rls_rms - simulation_rms(vmp)) / rls_rms)
        assert int(np.argmax(gaps)) == 0, gaps
