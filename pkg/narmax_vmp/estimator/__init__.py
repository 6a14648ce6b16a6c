"""
Online Bayesian identification of polynomial NARMAX systems.

Provides:
- Gaussian (information form) and Gamma beliefs with products and KL divergences
- Polynomial basis enumeration and the delayed-signal regressor buffer
- The recursive variational message-passing estimator and its free energy
- Posterior predictive, frozen one-step prediction and free-run simulation
- Recursive and iterative least-squares baselines
"""

from .errors import (
    NarmaxError,
    ContractViolationError,
    DegenerateBeliefError,
    NumericalConditioningError,
    NonFiniteSignalError,
    UnstableSystemError,
    ConfigurationError,
    InputFormatError,
    config_value,
)
from .beliefs import (
    GaussianBelief,
    GammaBelief,
    gaussian_product,
    gamma_product,
    gaussian_kl,
    gamma_kl,
    gamma_moments,
    gaussian_from_moments,
    isotropic_prior,
)
from .basis import (
    NarmaxConfig,
    BasisSpec,
    RegressorBuffer,
    enumerate_monomials,
    describe_monomial,
    expand,
    push,
)
from .vmp import (
    EstimatorState,
    VmpSettings,
    FreeEnergyTrace,
    VmpEstimator,
    initial_state,
    message_theta,
    message_tau,
    free_energy,
    vmp_step,
    save_checkpoint,
    load_checkpoint,
)
from .predict import (
    PredictiveDistribution,
    SimulationResult,
    FrozenPosterior,
    PointModel,
    posterior_predictive,
    map_prediction,
    simulate,
    predict_frozen,
    one_step_sequence,
    divergence_threshold,
    threshold_for_spread,
    write_simulation_csv,
)
from .baselines import (
    RlsState,
    IlsModel,
    rls_init,
    rls_step,
    rls_fit,
    ils_fit,
    predict_point,
    export_weights,
)

__all__ = [
    # Errors
    "NarmaxError",
    "ContractViolationError",
    "DegenerateBeliefError",
    "NumericalConditioningError",
    "NonFiniteSignalError",
    "UnstableSystemError",
    "ConfigurationError",
    "InputFormatError",
    "config_value",
    # Beliefs
    "GaussianBelief",
    "GammaBelief",
    "gaussian_product",
    "gamma_product",
    "gaussian_kl",
    "gamma_kl",
    "gamma_moments",
    "gaussian_from_moments",
    "isotropic_prior",
    # Basis
    "NarmaxConfig",
    "BasisSpec",
    "RegressorBuffer",
    "enumerate_monomials",
    "describe_monomial",
    "expand",
    "push",
    # VMP
    "EstimatorState",
    "VmpSettings",
    "FreeEnergyTrace",
    "VmpEstimator",
    "initial_state",
    "message_theta",
    "message_tau",
    "free_energy",
    "vmp_step",
    "save_checkpoint",
    "load_checkpoint",
    # Prediction
    "PredictiveDistribution",
    "SimulationResult",
    "FrozenPosterior",
    "PointModel",
    "posterior_predictive",
    "map_prediction",
    "simulate",
    "predict_frozen",
    "one_step_sequence",
    "divergence_threshold",
    "threshold_for_spread",
    "write_simulation_csv",
    # Baselines
    "RlsState",
    "IlsModel",
    "rls_init",
    "rls_step",
    "rls_fit",
    "ils_fit",
    "predict_point",
    "export_weights",
]
