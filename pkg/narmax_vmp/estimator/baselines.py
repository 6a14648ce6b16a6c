"""
Least-squares baselines: recursive least squares (online) and iterative,
extended least squares (offline). Both build regressors through
``basis.expand`` so they see exactly the features the VMP estimator sees.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .basis import BasisSpec, NarmaxConfig, RegressorBuffer, describe_monomial, enumerate_monomials, expand, push
from .errors import ConfigurationError, ContractViolationError, NarmaxError
from .predict import PointModel, divergence_threshold

logger = logging.getLogger(__name__)

DEFAULT_RLS_DELTA = 1e4
DEFAULT_ILS_REFINEMENTS = 10
ILS_WEIGHT_TOLERANCE = 1e-9


def predict_point(weights: np.ndarray, spec: BasisSpec, buffer: RegressorBuffer, u_next: float) -> float:
    """w^T phi for the next input."""
    return float(np.asarray(weights) @ expand(spec, u_next, buffer))


def export_weights(weights: np.ndarray, spec: BasisSpec) -> Dict[str, Any]:
    """JSON-ready weights with their basis and readable term names."""
    return {
        "basis": spec.to_dict(),
        "terms": [describe_monomial(spec, i) for i in range(spec.dimension)],
        "weights": np.asarray(weights, dtype=float).tolist(),
    }


# =========================================================================
# Recursive least squares
# =========================================================================

@dataclass
class RlsState:
    """Exponentially weighted RLS state; single owner."""
    weights: np.ndarray
    inverse_correlation: np.ndarray
    forgetting: float
    buffer: RegressorBuffer
    spec: BasisSpec
    last_prediction: float = 0.0
    diverged: bool = False

    def as_model(self) -> PointModel:
        return PointModel(spec=self.spec, weights=self.weights)


def rls_init(
    config: NarmaxConfig,
    delta: float = DEFAULT_RLS_DELTA,
    forgetting: float = 1.0,
) -> RlsState:
    """
    Zero weights and inverse correlation delta * I.

    Raises:
        ConfigurationError: forgetting outside (0, 1] or delta <= 0
    """
    if not (0.0 < forgetting <= 1.0):
        raise ConfigurationError(f"Forgetting factor must be in (0, 1], got {forgetting}")
    if delta <= 0.0:
        raise ConfigurationError(f"RLS delta must be positive, got {delta}")

    spec = enumerate_monomials(config)
    return RlsState(
        weights=np.zeros(spec.dimension),
        inverse_correlation=delta * np.eye(spec.dimension),
        forgetting=forgetting,
        buffer=RegressorBuffer.zeros(config),
        spec=spec,
    )


def rls_step(state: RlsState, u: float, y: float) -> RlsState:
    """One RLS update; the a-priori error is fed back into the buffer."""
    if state.diverged:
        return state

    try:
        phi = expand(state.spec, u, state.buffer)
        prediction = float(state.weights @ phi)
        p_phi = state.inverse_correlation @ phi
        gain = p_phi / (state.forgetting + float(phi @ p_phi))

        weights = state.weights + gain * (y - prediction)
        inverse_correlation = (state.inverse_correlation - np.outer(gain, p_phi)) / state.forgetting
        inverse_correlation = 0.5 * (inverse_correlation + inverse_correlation.T)

        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(inverse_correlation))):
            logger.warning("RLS update produced non-finite values; marking as diverged")
            return replace(state, diverged=True)

        buffer = push(state.buffer, u, y, y - prediction)
    except NarmaxError as e:
        logger.warning(f"RLS step failed: {e}")
        return replace(state, diverged=True)

    return replace(
        state,
        weights=weights,
        inverse_correlation=inverse_correlation,
        buffer=buffer,
        last_prediction=prediction,
    )


def rls_fit(
    inputs: Sequence[float],
    outputs: Sequence[float],
    config: NarmaxConfig,
    delta: float = DEFAULT_RLS_DELTA,
    forgetting: float = 1.0,
) -> RlsState:
    """Run RLS over a whole training signal."""
    if len(inputs) != len(outputs):
        raise ContractViolationError(f"inputs ({len(inputs)}) and outputs ({len(outputs)}) differ in length")
    state = rls_init(config, delta, forgetting)
    for u, y in zip(inputs, outputs):
        state = rls_step(state, float(u), float(y))
        if state.diverged:
            break
    return state


# =========================================================================
# Iterative (extended) least squares
# =========================================================================

@dataclass
class IlsModel:
    weights: np.ndarray
    spec: BasisSpec
    n_refinements: int = 0
    residual_history: List[float] = field(default_factory=list)
    rank_deficient: bool = False
    diverged: bool = False

    def as_model(self) -> PointModel:
        return PointModel(spec=self.spec, weights=self.weights)

    def to_dict(self) -> Dict[str, Any]:
        data = export_weights(self.weights, self.spec)
        data.update({
            "n_refinements": self.n_refinements,
            "residual_history": list(self.residual_history),
            "rank_deficient": self.rank_deficient,
            "diverged": self.diverged,
        })
        return data


def _regressor_matrix(
    spec: BasisSpec,
    inputs: np.ndarray,
    outputs: np.ndarray,
    residuals: np.ndarray,
) -> np.ndarray:
    buffer = RegressorBuffer.zeros(spec.config)
    rows = np.empty((len(inputs), spec.dimension))
    for k, (u, y, e) in enumerate(zip(inputs, outputs, residuals)):
        rows[k] = expand(spec, u, buffer)
        buffer = push(buffer, u, y, e)
    return rows


def _solve(regressors: np.ndarray, outputs: np.ndarray) -> tuple[np.ndarray, bool]:
    weights, _, rank, _ = np.linalg.lstsq(regressors, outputs, rcond=None)
    return weights, rank < regressors.shape[1]


def ils_fit(
    inputs: Sequence[float],
    outputs: Sequence[float],
    config: NarmaxConfig,
    n_refinements: int = DEFAULT_ILS_REFINEMENTS,
    threshold: Optional[float] = None,
) -> IlsModel:
    """
    Offline extended least squares.

    Pass 0 solves with zero error regressors. Each refinement recomputes the
    one-step residuals with the current weights, rebuilds the regressors
    with those residuals in the error history and re-solves. Stops early
    when the weights change by less than 1e-9. Rank-deficient systems get
    the minimum-norm solution and are flagged.
    """
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    if inputs.shape != outputs.shape:
        raise ContractViolationError(f"inputs {inputs.shape} and outputs {outputs.shape} differ in shape")
    if threshold is None:
        threshold = divergence_threshold(outputs)

    spec = enumerate_monomials(config)
    regressors = _regressor_matrix(spec, inputs, outputs, np.zeros_like(outputs))
    weights, rank_deficient = _solve(regressors, outputs)
    model = IlsModel(weights=weights, spec=spec, rank_deficient=rank_deficient)

    for refinement in range(1, n_refinements + 1):
        residuals = outputs - regressors @ model.weights
        model.residual_history.append(float(np.sqrt(np.mean(residuals ** 2))))
        if not np.all(np.isfinite(residuals)) or np.max(np.abs(residuals)) > threshold:
            logger.warning(f"ILS residuals diverged at refinement {refinement}")
            model.diverged = True
            break

        try:
            regressors = _regressor_matrix(spec, inputs, outputs, residuals)
        except NarmaxError as e:
            logger.warning(f"ILS regressor rebuild failed at refinement {refinement}: {e}")
            model.diverged = True
            break

        weights, deficient = _solve(regressors, outputs)
        change = float(np.linalg.norm(weights - model.weights))
        model.weights = weights
        model.rank_deficient = model.rank_deficient or deficient
        model.n_refinements = refinement

        if not np.all(np.isfinite(weights)):
            model.diverged = True
            break
        if change < ILS_WEIGHT_TOLERANCE:
            break

    if model.rank_deficient:
        logger.warning(f"ILS regressor matrix is rank deficient (N={len(inputs)}, D={spec.dimension})")
    return model
