"""
Posterior predictive distribution, one-step-ahead prediction and free-run
simulation with zero-padded error regressors.

Simulation and frozen-parameter prediction work on any FrozenModel, so the
VMP posterior and the least-squares baselines share one code path.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from .basis import BasisSpec, RegressorBuffer, expand, push
from .errors import ContractViolationError, NonFiniteSignalError
from .vmp import EstimatorState, FreeEnergyTrace, VmpEstimator, VmpSettings

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e4
DIVERGENCE_FLOOR = 1.0


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian predictive. Point predictors report variance 0."""
    mean: float
    variance: float


@dataclass
class SimulationResult:
    predictions: np.ndarray
    variances: np.ndarray
    diverged: bool = False
    diverged_at: Optional[int] = None

    def __len__(self) -> int:
        return len(self.predictions)


class FrozenModel(Protocol):
    spec: BasisSpec

    def predictive(self, phi: np.ndarray) -> PredictiveDistribution:
        ...


@dataclass
class FrozenPosterior:
    """
    Parameters fixed at a trained posterior. The covariance is factorised
    once so that long simulations do not refactorise per sample.
    """
    spec: BasisSpec
    mean: np.ndarray
    cholesky: np.ndarray
    noise_variance: float

    @classmethod
    def from_state(cls, state: EstimatorState) -> "FrozenPosterior":
        if not state.theta.is_well_conditioned():
            logger.warning(
                f"Posterior precision at step {state.step_index} has condition number "
                f">= {state.theta.condition_bound:.3g}; predictive variances are unreliable"
            )
        return cls(
            spec=state.spec,
            mean=state.theta.mean(),
            cholesky=state.theta.cholesky,
            noise_variance=state.tau.rate / state.tau.shape,
        )

    def parameter_variance(self, phi: np.ndarray) -> float:
        half = linalg.solve_triangular(self.cholesky, phi, lower=True)
        return float(half @ half)

    def predictive(self, phi: np.ndarray) -> PredictiveDistribution:
        return PredictiveDistribution(
            mean=float(self.mean @ phi),
            variance=self.parameter_variance(phi) + self.noise_variance,
        )


@dataclass
class PointModel:
    """Point-estimate weights (least-squares baselines)."""
    spec: BasisSpec
    weights: np.ndarray

    def predictive(self, phi: np.ndarray) -> PredictiveDistribution:
        return PredictiveDistribution(mean=float(self.weights @ phi), variance=0.0)


# =========================================================================
# Single-step prediction
# =========================================================================

def posterior_predictive(state: EstimatorState, u_next: float) -> PredictiveDistribution:
    """
    Predictive for y_{k+1}: mean mu^T phi, variance phi^T Lambda^{-1} phi + beta/alpha.
    The Student-t marginal over tau is moment-matched by using beta/alpha.

    Raises:
        NumericalConditioningError: posterior precision condition number above 1e12
    """
    phi = expand(state.spec, u_next, state.buffer)
    state.theta.check_conditioning()
    return PredictiveDistribution(
        mean=float(state.theta.mean() @ phi),
        variance=state.theta.quadratic_form(phi) + state.tau.rate / state.tau.shape,
    )


def map_prediction(p: PredictiveDistribution) -> float:
    """Mode of the (Gaussian) predictive, i.e. its mean."""
    return p.mean


def divergence_threshold(
    training_outputs: Sequence[float],
    factor: float = DIVERGENCE_FACTOR,
    floor: float = DIVERGENCE_FLOOR,
) -> float:
    """|y_hat| above this value marks a diverged prediction."""
    outputs = np.asarray(training_outputs, dtype=float)
    spread = float(np.std(outputs)) if outputs.size else 0.0
    return threshold_for_spread(spread, factor, floor)


def threshold_for_spread(
    spread: float,
    factor: float = DIVERGENCE_FACTOR,
    floor: float = DIVERGENCE_FLOOR,
) -> float:
    """Divergence threshold for a known training-output std."""
    if not np.isfinite(spread):
        spread = floor
    return factor * max(spread, floor)


def _is_diverged(value: float, threshold: float) -> bool:
    return not np.isfinite(value) or abs(value) > threshold


# =========================================================================
# Free-run simulation and frozen one-step prediction
# =========================================================================

def _run_frozen(
    model: FrozenModel,
    inputs: Sequence[float],
    outputs: Optional[Sequence[float]],
    threshold: float,
) -> SimulationResult:
    inputs = np.asarray(inputs, dtype=float)
    buffer = RegressorBuffer.zeros(model.spec.config)
    predictions: List[float] = []
    variances: List[float] = []

    for i, u in enumerate(inputs):
        try:
            p = model.predictive(expand(model.spec, u, buffer))
        except NonFiniteSignalError:
            return SimulationResult(np.asarray(predictions), np.asarray(variances), True, i)

        if _is_diverged(p.mean, threshold):
            logger.debug(f"Prediction diverged at sample {i}: {p.mean}")
            return SimulationResult(np.asarray(predictions), np.asarray(variances), True, i)

        predictions.append(p.mean)
        variances.append(p.variance)

        if outputs is None:
            # free run: feed back the prediction, errors padded with zeros
            buffer = push(buffer, u, p.mean, 0.0)
        else:
            y = float(outputs[i])
            buffer = push(buffer, u, y, y - p.mean)

    return SimulationResult(np.asarray(predictions), np.asarray(variances))


def as_frozen_model(model: Union[EstimatorState, FrozenModel]) -> FrozenModel:
    if isinstance(model, EstimatorState):
        return FrozenPosterior.from_state(model)
    return model


def simulate(
    state: Union[EstimatorState, FrozenModel],
    inputs: Sequence[float],
    threshold: float = DIVERGENCE_FACTOR * DIVERGENCE_FLOOR,
) -> SimulationResult:
    """
    Free-run simulation with frozen parameters. The private buffer starts at
    zero, holds previous predictions as outputs and zeros as errors. The
    estimator state is never modified. Divergence stops the run and is
    reported in the result.
    """
    return _run_frozen(as_frozen_model(state), inputs, None, threshold)


def predict_frozen(
    state: Union[EstimatorState, FrozenModel],
    inputs: Sequence[float],
    outputs: Sequence[float],
    threshold: float = DIVERGENCE_FACTOR * DIVERGENCE_FLOOR,
) -> SimulationResult:
    """One-step-ahead prediction on a validation signal with frozen parameters."""
    if len(inputs) != len(outputs):
        raise ContractViolationError(f"inputs ({len(inputs)}) and outputs ({len(outputs)}) differ in length")
    return _run_frozen(as_frozen_model(state), inputs, outputs, threshold)


def one_step_sequence(
    state: EstimatorState,
    inputs: Sequence[float],
    outputs: Sequence[float],
    settings: Optional[VmpSettings] = None,
    traces: Optional[List[FreeEnergyTrace]] = None,
    variances: Optional[List[float]] = None,
) -> Tuple[np.ndarray, EstimatorState]:
    """
    Online identification: predict y_k from the k-1 posterior, then update
    with (u_k, y_k). Free-energy traces and predictive variances are
    appended to ``traces`` and ``variances`` if given.

    Raises:
        NumericalConditioningError: a predictive variance was queried on an
            ill-conditioned posterior
    """
    if len(inputs) != len(outputs):
        raise ContractViolationError(f"inputs ({len(inputs)}) and outputs ({len(outputs)}) differ in length")

    estimator = VmpEstimator(state, settings)
    predictions = np.empty(len(inputs))
    for k, (u, y) in enumerate(zip(inputs, outputs)):
        p = posterior_predictive(estimator.state, float(u))
        predictions[k] = map_prediction(p)
        if variances is not None:
            variances.append(p.variance)
        estimator.update(float(u), float(y))

    if traces is not None:
        traces.extend(estimator.traces)
    return predictions, estimator.state


def write_simulation_csv(result: SimulationResult, inputs: Sequence[float], path: Union[str, Path]) -> None:
    """Columns: index, u, y_hat, variance (17 significant digits)."""
    n = len(result)
    frame = pd.DataFrame({
        "index": np.arange(n),
        "u": np.asarray(inputs, dtype=float)[:n],
        "y_hat": result.predictions,
        "variance": result.variances,
    })
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
