"""
Subcommand implementations. Each command returns a process exit code:
0 on success, 2 for input/configuration problems, 3 for numerical failures.
"""

import functools
import json
import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from sqlalchemy.exc import SQLAlchemyError

from estimator.baselines import export_weights
from estimator.basis import enumerate_monomials
from estimator.beliefs import gamma_entropy, gaussian_entropy
from estimator.errors import (
    ConfigurationError,
    ContractViolationError,
    InputFormatError,
    NarmaxError,
    UnstableSystemError,
)
from estimator.predict import (
    divergence_threshold,
    one_step_sequence,
    simulate,
    threshold_for_spread,
    write_simulation_csv,
)
from estimator.vmp import FreeEnergyTrace, initial_state, load_checkpoint, save_checkpoint
from experiments.database import ResultsDatabase
from experiments.datagen import (
    MultisineSpec,
    generate_multisine,
    generate_system,
    realization_streams,
    simulate_system,
    write_signal_csv,
)
from experiments.harness import (
    MAX_SYSTEM_ATTEMPTS,
    RunRecord,
    ExperimentPlan,
    aggregate,
    aggregates_frame,
    preset_plan,
    records_frame,
    run_plan,
    write_table,
)
from experiments.plotting import write_sweep_svg

from .inputs import load_identify_config, read_csv_columns, read_json, read_signal_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

INPUT_ERRORS = (InputFormatError, ConfigurationError, ContractViolationError)

PathLike = Union[str, Path]


def exit_codes(command: Callable[..., int]) -> Callable[..., int]:
    """Turn known failures into exit codes; anything else propagates."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> int:
        try:
            return command(*args, **kwargs)
        except INPUT_ERRORS as e:
            logger.error(f"{command.__name__} rejected its input: {e}", exc_info=True)
            return EXIT_INPUT_ERROR
        except NarmaxError as e:
            logger.error(f"{command.__name__} failed numerically: {e}", exc_info=True)
            return EXIT_NUMERICAL_FAILURE
        except OSError as e:
            logger.error(f"{command.__name__} could not access a file: {e}", exc_info=True)
            return EXIT_INPUT_ERROR
    return wrapper


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}{suffix}")


def write_trace_csv(traces: List[FreeEnergyTrace], path: PathLike) -> None:
    """Columns step, iteration, free_energy (one row per VMP iteration)."""
    steps, iterations, values = [], [], []
    for step, trace in enumerate(traces, start=1):
        for iteration, value in enumerate(trace.values, start=1):
            steps.append(step)
            iterations.append(iteration)
            values.append(value)
    frame = pd.DataFrame({"step": steps, "iteration": iterations, "free_energy": values})
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# =========================================================================
# identify / simulate
# =========================================================================

@exit_codes
def cmd_identify(
    data_path: PathLike,
    out_path: PathLike,
    config_path: Optional[PathLike] = None,
    predictions_path: Optional[PathLike] = None,
    trace_path: Optional[PathLike] = None,
) -> int:
    """
    Run the online estimator over a t,u,y file.

    Writes the final checkpoint to ``out_path``, the per-step one-step-ahead
    predictive mean and variance (default ``<out>.predictions.csv``) and
    the free-energy trace (default ``<out>.free_energy.csv``).
    """
    out_path = Path(out_path)
    predictions_path = Path(predictions_path) if predictions_path else _sibling(out_path, ".predictions.csv")
    trace_path = Path(trace_path) if trace_path else _sibling(out_path, ".free_energy.csv")

    inputs, outputs = read_signal_csv(data_path)
    config = load_identify_config(config_path)
    spec = enumerate_monomials(config.narmax)
    prior_theta, prior_tau = config.priors(spec)
    logger.info(f"Identifying {len(inputs)} samples with {spec.dimension} basis terms")

    traces: List[FreeEnergyTrace] = []
    variances: List[float] = []
    predictions, state = one_step_sequence(
        initial_state(spec, prior_theta, prior_tau), inputs, outputs, config.vmp, traces, variances
    )

    save_checkpoint(state, out_path)
    pd.DataFrame({
        "t": np.arange(len(inputs)),
        "u": inputs,
        "y": outputs,
        "y_hat": predictions,
        "variance": variances,
    }).to_csv(predictions_path, index=False, float_format="%.17g", lineterminator="\n")
    write_trace_csv(traces, trace_path)

    threshold = divergence_threshold(outputs, config.divergence_factor, config.divergence_floor)
    if len(predictions) and (not np.all(np.isfinite(predictions)) or np.max(np.abs(predictions)) > threshold):
        logger.error(f"One-step predictions exceeded the divergence threshold {threshold:g}")
        return EXIT_NUMERICAL_FAILURE

    if len(predictions):
        rms = float(np.sqrt(np.mean((outputs - predictions) ** 2)))
        logger.info(f"One-step prediction RMS: {rms:.6g}")
    logger.info(
        f"Posterior entropy: theta {gaussian_entropy(state.theta):.6g} nats, "
        f"tau {gamma_entropy(state.tau):.6g} nats (E[tau] = {state.tau.mean:.6g})"
    )
    logger.info(f"Wrote {out_path}, {predictions_path} and {trace_path}")
    return EXIT_OK


@exit_codes
def cmd_simulate(
    checkpoint_path: PathLike,
    inputs_path: PathLike,
    out_path: PathLike,
    config_path: Optional[PathLike] = None,
) -> int:
    """
    Free-run simulation of a checkpointed model on the ``u`` column of a CSV.
    The divergence threshold scales with the training-output std stored in
    the checkpoint.
    """
    state = load_checkpoint(checkpoint_path)
    inputs = read_csv_columns(inputs_path, ["u"])["u"]
    config = load_identify_config(config_path)
    threshold = threshold_for_spread(state.output_std, config.divergence_factor, config.divergence_floor)

    result = simulate(state, inputs, threshold)
    write_simulation_csv(result, inputs, out_path)

    if result.diverged:
        logger.error(f"Simulation diverged at sample {result.diverged_at} (threshold {threshold:g})")
        return EXIT_NUMERICAL_FAILURE
    logger.info(f"Simulated {len(result)} samples to {out_path}")
    return EXIT_OK


@exit_codes
def cmd_generate(
    out_path: PathLike,
    length: int = 1024,
    noise_std: float = 0.02,
    seed: int = 0,
    system_path: Optional[PathLike] = None,
) -> int:
    """
    Benchmark data: a multisine through a random benchmark system. The true
    coefficients are exported to ``system_path`` when given.
    """
    if length < 1:
        raise ConfigurationError(f"length must be >= 1, got {length}")

    for attempt in range(MAX_SYSTEM_ATTEMPTS):
        seeds = realization_streams(seed, 0, attempt)
        system = generate_system(seed, noise_std=noise_std, rng=seeds.generator("system"))
        inputs = generate_multisine(MultisineSpec(seed=seed), length, seeds.generator("input"))
        try:
            outputs, _ = simulate_system(system, inputs, rng=seeds.generator("noise"))
        except UnstableSystemError as e:
            logger.info(f"Rejected unstable system draw (attempt={attempt}): {e}")
            continue
        break
    else:
        raise UnstableSystemError(f"No stable system after {MAX_SYSTEM_ATTEMPTS} attempts")

    write_signal_csv(inputs, outputs, out_path)
    if system_path is not None:
        exported = export_weights(system.coefficients, system.spec)
        exported["noise_std"] = noise_std
        Path(system_path).write_text(json.dumps(exported, indent=2) + "\n")
    logger.info(f"Wrote {length} samples to {out_path}")
    return EXIT_OK


# =========================================================================
# experiment / plot
# =========================================================================

def _resolve_plan(plan_path: Optional[PathLike], preset: Optional[str], seed: Optional[int], default_seed: int) -> ExperimentPlan:
    if (plan_path is None) == (preset is None):
        raise ConfigurationError("Give exactly one of a plan file or --preset")

    if plan_path is not None:
        data = read_json(plan_path)
        if isinstance(data, dict) and "base_seed" not in data:
            data = {**data, "base_seed": default_seed}
        plan = ExperimentPlan.from_dict(data)
    else:
        plan = preset_plan(preset, base_seed=default_seed)

    if seed is not None:
        plan.base_seed = seed
    return plan


def _sweep_label(plan: ExperimentPlan) -> str:
    return "training length N" if plan.mode == "sample_sweep" else "noise std"


def _write_experiment_outputs(plan: ExperimentPlan, records: List[RunRecord], outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    aggregates = aggregates_frame(aggregate(records))
    write_table(records_frame(records), outdir / "records.csv")
    write_table(aggregates, outdir / "aggregates.csv")

    label = _sweep_label(plan)
    write_sweep_svg(aggregates, outdir / "simulation.svg", metric="rms_simulation", x_label=label,
                    y_label="simulation RMS")
    write_sweep_svg(aggregates, outdir / "prediction.svg", metric="rms_prediction", x_label=label,
                    y_label="1-step prediction RMS", failures=plan.mode == "sample_sweep")


def _load_stored_experiment(db: ResultsDatabase, experiment_id: int) -> Tuple[ExperimentPlan, List[RunRecord]]:
    plan = db.load_plan(experiment_id)
    if plan is None:
        raise InputFormatError(f"No experiment {experiment_id} in the results database")
    records = db.load_records(experiment_id)
    if not records:
        raise InputFormatError(f"Experiment {experiment_id} has no stored records")
    return plan, records


@exit_codes
def cmd_experiment(
    outdir: PathLike,
    plan_path: Optional[PathLike] = None,
    preset: Optional[str] = None,
    jobs: int = 1,
    seed: Optional[int] = None,
    default_seed: int = 0,
    database_url: Optional[str] = None,
    sql_echo: Optional[bool] = None,
    stored_experiment: Optional[int] = None,
) -> int:
    """
    Run an experiment plan and write records.csv, aggregates.csv,
    simulation.svg and prediction.svg into ``outdir``. Records are also
    stored in the results database when a URL is given.

    With ``stored_experiment`` nothing is run: the plan and records of that
    experiment are read back from the database and the outputs rebuilt.
    """
    outdir = Path(outdir)

    if stored_experiment is not None:
        if plan_path is not None or preset is not None:
            raise ConfigurationError("--from-db cannot be combined with a plan file or --preset")
        if not database_url:
            raise ConfigurationError("--from-db needs a results database URL")
        try:
            plan, records = _load_stored_experiment(ResultsDatabase(database_url, echo=sql_echo), stored_experiment)
        except SQLAlchemyError as e:
            logger.error(f"Failed to read the results database: {e}", exc_info=True)
            return EXIT_INPUT_ERROR
        _write_experiment_outputs(plan, records, outdir)
        logger.info(f"Rebuilt outputs of experiment {stored_experiment} ({len(records)} runs) in {outdir}")
        return EXIT_OK

    plan = _resolve_plan(plan_path, preset, seed, default_seed)
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")

    records = run_plan(plan, jobs=jobs)
    _write_experiment_outputs(plan, records, outdir)

    n_failed = sum(r.failed for r in records)
    logger.info(f"Experiment finished: {len(records)} runs, {n_failed} failed, outputs in {outdir}")

    if database_url:
        try:
            db = ResultsDatabase(database_url, echo=sql_echo)
            db.create_tables()
            experiment_id = db.save_records(plan, records)
            logger.info(f"Stored {len(records)} records as experiment {experiment_id}")
        except SQLAlchemyError as e:
            logger.error(f"Failed to store records in the results database: {e}", exc_info=True)
            return EXIT_INPUT_ERROR
    return EXIT_OK


@exit_codes
def cmd_plot(
    aggregates_path: PathLike,
    out_path: PathLike,
    metric: str = "rms_simulation",
    failures: bool = False,
    x_label: str = "sweep value",
) -> int:
    """Chart an aggregates.csv file as SVG."""
    aggregates_path = Path(aggregates_path)
    if not aggregates_path.is_file():
        raise InputFormatError(f"{aggregates_path} does not exist")
    try:
        frame = pd.read_csv(aggregates_path)
    except pd.errors.EmptyDataError:
        raise InputFormatError("aggregates file is empty, expected a header row", line_number=1)
    except pd.errors.ParserError as e:
        raise InputFormatError(f"{aggregates_path}: {e}") from e

    write_sweep_svg(frame, out_path, metric=metric, failures=failures, x_label=x_label)
    return EXIT_OK
