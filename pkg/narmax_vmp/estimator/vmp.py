"""
Recursive variational message-passing estimator.

Each observation runs a fixed schedule on the per-sample factor graph:
the coefficient factor q(theta) is recombined with the Gaussian likelihood
message, then the precision factor q(tau) with the Gamma likelihood
message, repeated a fixed number of times. Both updates always start from
the previous posterior (the snapshot prior), so one observation is counted
exactly once. The posterior after step k is the prior for step k+1.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .basis import BasisSpec, NarmaxConfig, RegressorBuffer, enumerate_monomials, expand, push
from .beliefs import (
    GammaBelief,
    GaussianBelief,
    gamma_kl,
    gamma_product,
    gaussian_kl,
    gaussian_product,
    isotropic_prior,
)
from .errors import ConfigurationError, NonFiniteSignalError, config_value

logger = logging.getLogger(__name__)

LIKELIHOOD_SHAPE = 1.5
RATE_FLOOR = 1e-12

# Priors used in the benchmark study: E[tau] = 100, Var[tau] = 1000
DEFAULT_PRIOR_SHAPE = 10.0
DEFAULT_PRIOR_RATE = 0.1


@dataclass(frozen=True)
class VmpSettings:
    """Iteration budget and early-stop threshold for one time step."""
    n_iterations: int = 10
    fe_tolerance: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "n_iterations", config_value("n_iterations", self.n_iterations, int))
        object.__setattr__(self, "fe_tolerance", config_value("fe_tolerance", self.fe_tolerance, float))
        if self.n_iterations < 1:
            raise ConfigurationError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if not self.fe_tolerance >= 0.0:
            raise ConfigurationError(f"fe_tolerance must be >= 0, got {self.fe_tolerance}")

    def to_dict(self) -> Dict[str, Any]:
        return {"n_iterations": self.n_iterations, "fe_tolerance": self.fe_tolerance}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VmpSettings":
        if not isinstance(data, dict):
            raise ConfigurationError(f"vmp settings must be a JSON object, got {data!r}")
        unknown = set(data) - {"n_iterations", "fe_tolerance"}
        if unknown:
            raise ConfigurationError(f"Unknown vmp settings keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class FreeEnergyTrace:
    """Free energy after every coordinate-descent iteration of one step."""
    values: List[float] = field(default_factory=list)

    def is_non_increasing(self, tolerance: float = 1e-8) -> bool:
        return all(b <= a + tolerance for a, b in zip(self.values, self.values[1:]))

    @property
    def final(self) -> float:
        return self.values[-1]


@dataclass
class EstimatorState:
    """
    Online estimator state: coefficient and precision beliefs, the delayed
    signal buffer and the prediction made for the latest processed sample.
    ``output_mean``/``output_m2`` are running moments of the observed
    outputs, kept so a checkpoint carries the training-output spread that
    the divergence threshold is defined on.
    """
    theta: GaussianBelief
    tau: GammaBelief
    buffer: RegressorBuffer
    spec: BasisSpec
    last_prediction: float = 0.0
    step_index: int = 0
    output_mean: float = 0.0
    output_m2: float = 0.0

    @property
    def output_std(self) -> float:
        """Population std of the outputs seen so far (0 before the first step)."""
        if self.step_index == 0:
            return 0.0
        return float(np.sqrt(max(self.output_m2, 0.0) / self.step_index))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step_index": self.step_index,
            "theta": self.theta.to_dict(),
            "tau": self.tau.to_dict(),
            "buffer": self.buffer.to_dict(),
            "last_prediction": self.last_prediction,
            "output_mean": self.output_mean,
            "output_m2": self.output_m2,
            "basis": self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EstimatorState":
        spec = BasisSpec.from_dict(data["basis"])
        theta = GaussianBelief.from_dict(data["theta"])
        if theta.dimension != spec.dimension:
            raise ConfigurationError(
                f"Checkpoint theta has dimension {theta.dimension}, basis has {spec.dimension}"
            )
        return cls(
            theta=theta,
            tau=GammaBelief.from_dict(data["tau"]),
            buffer=RegressorBuffer.from_dict(data["buffer"]),
            spec=spec,
            last_prediction=float(data.get("last_prediction", 0.0)),
            step_index=int(data.get("step_index", 0)),
            output_mean=float(data.get("output_mean", 0.0)),
            output_m2=float(data.get("output_m2", 0.0)),
        )


def initial_state(
    config: Union[NarmaxConfig, BasisSpec],
    prior_theta: Optional[GaussianBelief] = None,
    prior_tau: Optional[GammaBelief] = None,
) -> EstimatorState:
    """
    Fresh estimator with zero-initialised buffer.

    Defaults to the weakly informative coefficient prior N(0, I) and the
    Gamma(10, 0.1) precision prior.
    """
    spec = config if isinstance(config, BasisSpec) else enumerate_monomials(config)
    theta = prior_theta if prior_theta is not None else isotropic_prior(spec.dimension)
    if theta.dimension != spec.dimension:
        raise ConfigurationError(
            f"Prior dimension {theta.dimension} does not match basis dimension {spec.dimension}"
        )
    tau = prior_tau if prior_tau is not None else GammaBelief(DEFAULT_PRIOR_SHAPE, DEFAULT_PRIOR_RATE)
    return EstimatorState(
        theta=theta,
        tau=tau,
        buffer=RegressorBuffer.zeros(spec.config),
        spec=spec,
    )


# =========================================================================
# Messages
# =========================================================================

def message_theta(phi: np.ndarray, y: float, tau: GammaBelief) -> GaussianBelief:
    """Likelihood message towards theta: rank-1 precision E[tau] phi phi^T."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise NonFiniteSignalError("Non-finite regressor in theta message")
    expected_tau = tau.mean
    return GaussianBelief(expected_tau * np.outer(phi, phi), expected_tau * y * phi)


def message_tau(phi: np.ndarray, y: float, theta: GaussianBelief) -> GammaBelief:
    """Likelihood message towards tau: shape 3/2, rate half the expected squared residual."""
    phi = np.asarray(phi, dtype=float)
    residual = y - float(theta.mean() @ phi)
    rate = 0.5 * (residual ** 2 + theta.quadratic_form(phi))
    return GammaBelief(LIKELIHOOD_SHAPE, max(rate, RATE_FLOOR))


# =========================================================================
# Free energy
# =========================================================================

def expected_log_likelihood(q_theta: GaussianBelief, q_tau: GammaBelief, phi: np.ndarray, y: float) -> float:
    """E_q[ln N(y | theta^T phi, 1/tau)] in closed form."""
    phi = np.asarray(phi, dtype=float)
    residual = y - float(q_theta.mean() @ phi)
    expected_square = residual ** 2 + q_theta.quadratic_form(phi)
    return 0.5 * (q_tau.expected_log - np.log(2.0 * np.pi)) - 0.5 * q_tau.mean * expected_square


def free_energy(
    q_theta: GaussianBelief,
    q_tau: GammaBelief,
    prior_theta: GaussianBelief,
    prior_tau: GammaBelief,
    phi: np.ndarray,
    y: float,
) -> float:
    """Complexity (KL to the step prior) minus accuracy (expected log-likelihood)."""
    complexity = gaussian_kl(q_theta, prior_theta) + gamma_kl(q_tau, prior_tau)
    accuracy = expected_log_likelihood(q_theta, q_tau, phi, y)
    return float(complexity - accuracy)


# =========================================================================
# Recursive step
# =========================================================================

def vmp_step(
    state: EstimatorState,
    u: float,
    y: float,
    settings: VmpSettings = VmpSettings(),
) -> tuple[EstimatorState, FreeEnergyTrace]:
    """
    Process one observation (u_k, y_k).

    Returns:
        The updated state and the free-energy trace of this step.

    Raises:
        NonFiniteSignalError: u or y is not finite
        NumericalConditioningError: the coefficient precision cannot be factorised
    """
    if not (np.isfinite(u) and np.isfinite(y)):
        raise NonFiniteSignalError(f"Non-finite observation at step {state.step_index + 1}: u={u}, y={y}")

    phi = expand(state.spec, u, state.buffer)
    prior_theta, prior_tau = state.theta, state.tau

    # prediction made from the k-1 posterior, before seeing y_k
    prediction = float(prior_theta.mean() @ phi)

    q_theta, q_tau = prior_theta, prior_tau
    trace = FreeEnergyTrace()
    for iteration in range(settings.n_iterations):
        q_theta = gaussian_product(prior_theta, message_theta(phi, y, q_tau))
        q_tau = gamma_product(prior_tau, message_tau(phi, y, q_theta))
        trace.values.append(free_energy(q_theta, q_tau, prior_theta, prior_tau, phi, y))

        if iteration > 0 and abs(trace.values[-2] - trace.values[-1]) < settings.fe_tolerance:
            logger.debug(f"Step {state.step_index + 1}: converged after {iteration + 1} iterations")
            break

    error = y - prediction
    count = state.step_index + 1
    delta = y - state.output_mean
    output_mean = state.output_mean + delta / count
    new_state = replace(
        state,
        theta=q_theta,
        tau=q_tau,
        buffer=push(state.buffer, u, y, error),
        last_prediction=prediction,
        step_index=count,
        output_mean=output_mean,
        output_m2=state.output_m2 + delta * (y - output_mean),
    )
    return new_state, trace


class VmpEstimator:
    """Stateful wrapper for streaming use: owns one EstimatorState."""

    def __init__(self, state: EstimatorState, settings: Optional[VmpSettings] = None):
        self.state = state
        self.settings = settings or VmpSettings()
        self.traces: List[FreeEnergyTrace] = []

    def update(self, u: float, y: float) -> FreeEnergyTrace:
        self.state, trace = vmp_step(self.state, u, y, self.settings)
        self.traces.append(trace)
        return trace

    @property
    def step_index(self) -> int:
        return self.state.step_index


# =========================================================================
# Checkpoints
# =========================================================================

def save_checkpoint(state: EstimatorState, path: Union[str, Path]) -> None:
    """Write a JSON checkpoint (floats use round-trip repr)."""
    Path(path).write_text(json.dumps(state.to_dict(), indent=2) + "\n")
    logger.info(f"Checkpoint written to {path} at step {state.step_index}")


def load_checkpoint(path: Union[str, Path]) -> EstimatorState:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Checkpoint {path} is not valid JSON: {e}") from e
    try:
        return EstimatorState.from_dict(data)
    except KeyError as e:
        raise ConfigurationError(f"Checkpoint {path} is missing field {e}") from e
