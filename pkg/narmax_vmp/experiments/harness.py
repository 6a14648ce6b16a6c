"""
Experiment orchestration: sample-size and noise-level sweeps comparing the
VMP estimator with the RLS and ILS baselines.

A realization (system draw + training/validation signals) is the unit of
parallel work. Each one derives its randomness from its own seed sequence,
so the records do not depend on the worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from estimator.baselines import DEFAULT_ILS_REFINEMENTS, DEFAULT_RLS_DELTA, ils_fit, rls_init, rls_step
from estimator.basis import NarmaxConfig, enumerate_monomials
from estimator.beliefs import GammaBelief, isotropic_prior
from estimator.errors import (
    ConfigurationError,
    ContractViolationError,
    NarmaxError,
    UnstableSystemError,
    config_value,
)
from estimator.predict import (
    DIVERGENCE_FACTOR,
    FrozenModel,
    FrozenPosterior,
    divergence_threshold,
    predict_frozen,
    simulate,
)
from estimator.vmp import VmpEstimator, VmpSettings, initial_state

from .datagen import BENCHMARK_CONFIG, MultisineSpec, generate_multisine, generate_system, realization_streams, simulate_system

logger = logging.getLogger(__name__)

MODES = ("sample_sweep", "noise_sweep")
ESTIMATORS = ("vmp", "rls", "ils")
MAX_SYSTEM_ATTEMPTS = 10

DESK_TRAINING_LENGTHS = [16, 32, 64, 128, 256, 512, 1024]
DESK_NOISE_GRID = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]


@dataclass(frozen=True)
class VmpPriors:
    """Isotropic coefficient prior N(mean, precision^{-1} I) and Gamma(shape, rate) noise prior."""
    mean: float = 0.0
    precision: float = 1.0
    shape: float = 10.0
    rate: float = 0.1

    def __post_init__(self):
        for name in ("mean", "precision", "shape", "rate"):
            object.__setattr__(self, name, config_value(f"vmp_priors.{name}", getattr(self, name), float))
        for name in ("precision", "shape", "rate"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"vmp_priors.{name} must be > 0, got {getattr(self, name)}")


@dataclass
class ExperimentPlan:
    mode: str = "sample_sweep"
    training_lengths: List[int] = field(default_factory=lambda: list(DESK_TRAINING_LENGTHS))
    noise_stds: List[float] = field(default_factory=lambda: [0.02])
    n_realizations: int = 50
    validation_length: int = 1000
    estimators: List[str] = field(default_factory=lambda: list(ESTIMATORS))
    base_seed: int = 0
    vmp_priors: VmpPriors = field(default_factory=VmpPriors)
    vmp: VmpSettings = field(default_factory=VmpSettings)
    model: NarmaxConfig = BENCHMARK_CONFIG
    ils_refinements: int = DEFAULT_ILS_REFINEMENTS
    rls_delta: float = DEFAULT_RLS_DELTA
    divergence_factor: float = DIVERGENCE_FACTOR

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: describing the first invalid field
        """
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("training_lengths", "noise_stds", "estimators"):
            if not isinstance(getattr(self, name), (list, tuple)):
                raise ConfigurationError(f"{name} must be a list, got {getattr(self, name)!r}")
        self.training_lengths = [config_value("training_lengths", n, int) for n in self.training_lengths]
        self.noise_stds = [config_value("noise_stds", s, float) for s in self.noise_stds]
        for name in ("n_realizations", "validation_length", "base_seed", "ils_refinements"):
            setattr(self, name, config_value(name, getattr(self, name), int))
        for name in ("rls_delta", "divergence_factor"):
            setattr(self, name, config_value(name, getattr(self, name), float))

        if not self.training_lengths or not self.noise_stds:
            raise ConfigurationError("training_lengths and noise_stds must be non-empty")
        if self.mode == "sample_sweep" and len(self.noise_stds) != 1:
            raise ConfigurationError("sample_sweep takes exactly one noise_std")
        if self.mode == "noise_sweep" and len(self.training_lengths) != 1:
            raise ConfigurationError("noise_sweep takes exactly one training length")
        if any(n < 1 for n in self.training_lengths):
            raise ConfigurationError(f"training lengths must be >= 1, got {self.training_lengths}")
        if not all(s >= 0 for s in self.noise_stds):
            raise ConfigurationError(f"noise_stds must be >= 0, got {self.noise_stds}")
        if self.n_realizations < 1:
            raise ConfigurationError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if self.validation_length < 1:
            raise ConfigurationError(f"validation_length must be >= 1, got {self.validation_length}")
        if self.ils_refinements < 0:
            raise ConfigurationError(f"ils_refinements must be >= 0, got {self.ils_refinements}")
        if not (self.rls_delta > 0 and self.divergence_factor > 0):
            raise ConfigurationError(
                f"rls_delta and divergence_factor must be > 0, got {self.rls_delta}, {self.divergence_factor}"
            )
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if not self.estimators or unknown:
            raise ConfigurationError(f"estimators must be a non-empty subset of {ESTIMATORS}, got {self.estimators}")

    def sweep_values(self) -> List[float]:
        if self.mode == "sample_sweep":
            return [int(n) for n in self.training_lengths]
        return [float(s) for s in self.noise_stds]

    def cell(self, sweep_value: float) -> Tuple[int, float]:
        """(training length, noise std) of one sweep point."""
        if self.mode == "sample_sweep":
            return int(sweep_value), float(self.noise_stds[0])
        return int(self.training_lengths[0]), float(sweep_value)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "training_lengths": list(self.training_lengths),
            "noise_stds": list(self.noise_stds),
            "n_realizations": self.n_realizations,
            "validation_length": self.validation_length,
            "estimators": list(self.estimators),
            "base_seed": self.base_seed,
            "vmp_priors": asdict(self.vmp_priors),
            "vmp": self.vmp.to_dict(),
            "model": self.model.to_dict(),
            "ils_refinements": self.ils_refinements,
            "rls_delta": self.rls_delta,
            "divergence_factor": self.divergence_factor,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentPlan":
        if not isinstance(data, dict):
            raise ConfigurationError("Experiment plan must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"Unknown plan keys: {sorted(unknown)}")

        kwargs = dict(data)
        try:
            if "vmp_priors" in kwargs:
                kwargs["vmp_priors"] = VmpPriors(**kwargs["vmp_priors"])
            if "vmp" in kwargs:
                kwargs["vmp"] = VmpSettings.from_dict(kwargs["vmp"])
            if "model" in kwargs:
                kwargs["model"] = NarmaxConfig.from_dict(kwargs["model"])
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigurationError(f"Invalid experiment plan: {e}") from e


@dataclass
class RunRecord:
    estimator: str
    sweep_value: float
    realization: int
    rms_simulation: float
    rms_prediction: float
    failed: bool


@dataclass
class AggregateRow:
    sweep_value: float
    estimator: str
    n_runs: int
    n_failed: int
    mean_rms_simulation: Optional[float]
    sem_rms_simulation: Optional[float]
    mean_rms_prediction: Optional[float]
    sem_rms_prediction: Optional[float]

    @property
    def failure_proportion(self) -> float:
        return self.n_failed / self.n_runs


def preset_plan(name: str, **overrides: Any) -> ExperimentPlan:
    """
    Desk-scale versions of the benchmark study:

    - experiment1: training-length sweep at noise std 0.02
    - experiment1_prediction: training-length sweep at noise std 0.2
      (1-step prediction errors and failure proportions)
    - experiment2: noise sweep at training length 128
    """
    presets = {
        "experiment1": dict(mode="sample_sweep", noise_stds=[0.02]),
        "experiment1_prediction": dict(mode="sample_sweep", noise_stds=[0.2]),
        "experiment2": dict(mode="noise_sweep", training_lengths=[128], noise_stds=list(DESK_NOISE_GRID)),
    }
    if name not in presets:
        raise ConfigurationError(f"Unknown preset {name!r}; choose from {sorted(presets)}")
    return ExperimentPlan(**{**presets[name], **overrides})


# =========================================================================
# Metrics
# =========================================================================

def rms(errors: Sequence[float]) -> float:
    """Root mean square; raises ContractViolationError on empty input."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ContractViolationError("rms of an empty error vector")
    return float(np.sqrt(np.mean(errors ** 2)))


def _mean_sem(values: List[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    mean = float(np.mean(values))
    if len(values) == 1:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate(records: Sequence[RunRecord]) -> List[AggregateRow]:
    """
    Mean and SEM over non-failed runs per (sweep value, estimator) cell,
    plus failure counts. Cells keep the order in which they first appear.
    A single successful run has SEM 0; an all-failed cell has no mean/SEM.
    """
    cells: Dict[Tuple[float, str], List[RunRecord]] = {}
    for record in records:
        cells.setdefault((record.sweep_value, record.estimator), []).append(record)

    rows = []
    for (sweep_value, estimator), cell in cells.items():
        ok = [r for r in cell if not r.failed]
        mean_sim, sem_sim = _mean_sem([r.rms_simulation for r in ok])
        mean_pred, sem_pred = _mean_sem([r.rms_prediction for r in ok])
        rows.append(AggregateRow(
            sweep_value=sweep_value,
            estimator=estimator,
            n_runs=len(cell),
            n_failed=len(cell) - len(ok),
            mean_rms_simulation=mean_sim,
            sem_rms_simulation=sem_sim,
            mean_rms_prediction=mean_pred,
            sem_rms_prediction=sem_pred,
        ))
    return rows


# =========================================================================
# Training and evaluation of one run
# =========================================================================

def _frozen_or_none(model: FrozenModel) -> Optional[FrozenModel]:
    weights = model.mean if isinstance(model, FrozenPosterior) else model.weights
    return model if np.all(np.isfinite(weights)) else None


def _online_models(
    name: str,
    plan: ExperimentPlan,
    inputs: np.ndarray,
    outputs: np.ndarray,
    lengths: Sequence[int],
) -> Dict[int, Optional[FrozenModel]]:
    """
    One online pass over the longest training prefix, freezing a model at
    every requested length. The recursions are causal, so the model frozen
    at N equals a fresh fit on the first N samples. None marks a diverged fit.
    """
    models: Dict[int, Optional[FrozenModel]] = {n: None for n in lengths}
    checkpoints = set(lengths)

    if name == "vmp":
        spec = enumerate_monomials(plan.model)
        priors = plan.vmp_priors
        estimator = VmpEstimator(
            initial_state(
                spec,
                isotropic_prior(spec.dimension, priors.mean, priors.precision),
                GammaBelief(priors.shape, priors.rate),
            ),
            plan.vmp,
        )
        try:
            for k in range(max(lengths)):
                estimator.update(float(inputs[k]), float(outputs[k]))
                if k + 1 in checkpoints:
                    models[k + 1] = _frozen_or_none(FrozenPosterior.from_state(estimator.state))
        except NarmaxError as e:
            logger.error(f"vmp training failed at step {estimator.step_index + 1}: {e}", exc_info=True)
        return models

    state = rls_init(plan.model, delta=plan.rls_delta)
    for k in range(max(lengths)):
        state = rls_step(state, float(inputs[k]), float(outputs[k]))
        if state.diverged:
            logger.warning(f"rls diverged at step {k + 1}")
            break
        if k + 1 in checkpoints:
            models[k + 1] = _frozen_or_none(state.as_model())
    return models


def _ils_model(plan: ExperimentPlan, inputs: np.ndarray, outputs: np.ndarray, threshold: float) -> Optional[FrozenModel]:
    try:
        fitted = ils_fit(inputs, outputs, plan.model, plan.ils_refinements, threshold)
    except NarmaxError as e:
        logger.error(f"ils training failed (N={len(inputs)}): {e}", exc_info=True)
        return None
    if fitted.diverged:
        return None
    return _frozen_or_none(fitted.as_model())


def _evaluate(
    name: str,
    model: Optional[FrozenModel],
    sweep_value: float,
    realization: int,
    threshold: float,
    validation: Tuple[np.ndarray, np.ndarray],
) -> RunRecord:
    u_val, y_val = validation
    failed = RunRecord(name, sweep_value, realization, math.nan, math.nan, True)
    if model is None:
        logger.warning(f"{name} diverged during training (sweep={sweep_value}, realization={realization})")
        return failed

    try:
        simulation = simulate(model, u_val, threshold)
        prediction = predict_frozen(model, u_val, y_val, threshold)
    except NarmaxError as e:
        logger.error(f"{name} run failed (sweep={sweep_value}, realization={realization}): {e}", exc_info=True)
        return failed

    if simulation.diverged or prediction.diverged:
        logger.warning(f"{name} validation diverged (sweep={sweep_value}, realization={realization})")
        return failed

    return RunRecord(
        estimator=name,
        sweep_value=sweep_value,
        realization=realization,
        rms_simulation=rms(y_val - simulation.predictions),
        rms_prediction=rms(y_val - prediction.predictions),
        failed=False,
    )


def _realization_signals(
    plan: ExperimentPlan,
    realization: int,
    multisine: MultisineSpec,
) -> Optional[Tuple[np.ndarray, np.ndarray, Dict[float, Tuple[np.ndarray, np.ndarray]]]]:
    """
    Training input, validation input and per-noise-level (y_train, y_val).
    Unstable system draws are rejected and redrawn with the next attempt key.
    """
    max_length = max(int(n) for n in plan.training_lengths)
    noise_levels = sorted({plan.cell(v)[1] for v in plan.sweep_values()})

    for attempt in range(MAX_SYSTEM_ATTEMPTS):
        seeds = realization_streams(plan.base_seed, realization, attempt)
        system = generate_system(seed=plan.base_seed, rng=seeds.generator("system"))
        u_train = generate_multisine(multisine, max_length, seeds.generator("input"))
        u_val = generate_multisine(multisine, plan.validation_length, seeds.generator("validation_input"))

        try:
            outputs = {}
            for noise_std in noise_levels:
                noisy = system.with_noise(noise_std)
                y_train, _ = simulate_system(noisy, u_train, rng=seeds.generator("noise"))
                y_val, _ = simulate_system(noisy, u_val, rng=seeds.generator("validation_noise"))
                outputs[noise_std] = (y_train, y_val)
        except UnstableSystemError as e:
            logger.info(f"Rejected unstable system draw (realization={realization}, attempt={attempt}): {e}")
            continue
        return u_train, u_val, outputs

    logger.error(f"No stable system after {MAX_SYSTEM_ATTEMPTS} attempts (realization={realization})")
    return None


def run_realization(plan: ExperimentPlan, realization: int, multisine: Optional[MultisineSpec] = None) -> List[RunRecord]:
    """All records of one realization across the sweep and the estimators."""
    multisine = multisine or MultisineSpec()
    signals = _realization_signals(plan, realization, multisine)
    sweep_values = plan.sweep_values()

    if signals is None:
        records = [
            RunRecord(name, v, realization, math.nan, math.nan, True)
            for v in sweep_values for name in plan.estimators
        ]
        logger.info(f"Realization {realization + 1}/{plan.n_realizations} done")
        return records

    u_train, u_val, outputs = signals
    cells: Dict[Tuple[float, str], RunRecord] = {}
    for noise_std, (y_train, y_val) in outputs.items():
        values = [v for v in sweep_values if plan.cell(v)[1] == noise_std]
        lengths = sorted({plan.cell(v)[0] for v in values})
        for name in plan.estimators:
            if name == "ils":
                models = {
                    n: _ils_model(plan, u_train[:n], y_train[:n], divergence_threshold(y_train[:n], plan.divergence_factor))
                    for n in lengths
                }
            else:
                models = _online_models(name, plan, u_train, y_train, lengths)

            for value in values:
                length = plan.cell(value)[0]
                threshold = divergence_threshold(y_train[:length], plan.divergence_factor)
                cells[(value, name)] = _evaluate(name, models[length], value, realization, threshold, (u_val, y_val))

    logger.info(f"Realization {realization + 1}/{plan.n_realizations} done")
    return [cells[(v, name)] for v in sweep_values for name in plan.estimators]


def run_plan(plan: ExperimentPlan, jobs: int = 1, multisine: Optional[MultisineSpec] = None) -> List[RunRecord]:
    """
    Execute every (sweep value, realization, estimator) run.

    Individual failures become failed records; the sweep never aborts.
    Output order is (sweep value, estimator, realization) regardless of
    the worker count.
    """
    plan.validate()
    logger.info(
        f"Running {plan.mode} with {len(plan.sweep_values())} sweep values, "
        f"{plan.n_realizations} realizations, estimators {plan.estimators}, jobs={jobs}"
    )

    realizations = range(plan.n_realizations)
    if jobs <= 1:
        batches = [run_realization(plan, r, multisine) for r in realizations]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(lambda r: run_realization(plan, r, multisine), realizations))

    sweep_order = {v: i for i, v in enumerate(plan.sweep_values())}
    estimator_order = {e: i for i, e in enumerate(plan.estimators)}
    records = [r for batch in batches for r in batch]
    records.sort(key=lambda r: (sweep_order[r.sweep_value], estimator_order[r.estimator], r.realization))
    return records


# =========================================================================
# Tables
# =========================================================================

AGGREGATE_COLUMNS = [
    "sweep_value",
    "estimator",
    "mean_rms_simulation",
    "sem_rms_simulation",
    "mean_rms_prediction",
    "sem_rms_prediction",
    "failure_proportion",
    "n_runs",
]


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "sweep_value": [r.sweep_value for r in records],
        "estimator": [r.estimator for r in records],
        "realization": [r.realization for r in records],
        "rms_sim": [r.rms_simulation for r in records],
        "rms_pred": [r.rms_prediction for r in records],
        "failed": [int(r.failed) for r in records],
    })


def aggregates_frame(rows: Sequence[AggregateRow]) -> pd.DataFrame:
    def value(x: Optional[float]) -> float:
        return math.nan if x is None else x

    return pd.DataFrame({
        "sweep_value": [r.sweep_value for r in rows],
        "estimator": [r.estimator for r in rows],
        "mean_rms_simulation": [value(r.mean_rms_simulation) for r in rows],
        "sem_rms_simulation": [value(r.sem_rms_simulation) for r in rows],
        "mean_rms_prediction": [value(r.mean_rms_prediction) for r in rows],
        "sem_rms_prediction": [value(r.sem_rms_prediction) for r in rows],
        "failure_proportion": [r.failure_proportion for r in rows],
        "n_runs": [r.n_runs for r in rows],
    }, columns=AGGREGATE_COLUMNS)


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    """CSV with 17 significant digits, '\\n' line endings, missing values empty."""
    frame.to_csv(path, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
