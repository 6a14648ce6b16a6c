"""
Belief types for the coefficient and noise-precision factors.

GaussianBelief is kept in information form (precision, precision-weighted
mean) so that likelihood messages with a rank-1, singular precision can be
combined without any inversion. Inversion only happens when a mean,
covariance or predictive variance is actually queried.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Tuple, Type

import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln

from .errors import (
    ContractViolationError,
    DegenerateBeliefError,
    NarmaxError,
    NumericalConditioningError,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
MAX_CONDITION_NUMBER = 1e12


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _cholesky(
    matrix: np.ndarray,
    error_cls: Type[NarmaxError] = NumericalConditioningError,
) -> np.ndarray:
    """
    Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises:
        error_cls: if the matrix is not PD
    """
    try:
        factor = linalg.cholesky(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise error_cls(f"Matrix is not positive definite: {e}") from e

    if factor.size and np.min(np.abs(np.diag(factor))) == 0.0:
        raise error_cls("Matrix is singular")
    return factor


def _condition_bound(factor: np.ndarray) -> float:
    """
    Squared ratio of the extreme diagonal entries of a Cholesky factor, a
    lower bound on the condition number of the factorised matrix.
    """
    diagonal = np.abs(np.diag(factor))
    if not diagonal.size:
        return 1.0
    return float((diagonal.max() / diagonal.min()) ** 2)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """
    Multivariate Gaussian in information form.

    Full beliefs are positive definite; messages (e.g. the likelihood
    message for the coefficients) may be only positive semi-definite.
    """
    precision: np.ndarray
    precision_weighted_mean: np.ndarray

    def __post_init__(self):
        precision = np.array(self.precision, dtype=float, ndmin=2)
        weighted_mean = np.array(self.precision_weighted_mean, dtype=float).reshape(-1)

        if precision.ndim != 2 or precision.shape[0] != precision.shape[1]:
            raise ContractViolationError(f"Precision must be square, got shape {precision.shape}")
        if weighted_mean.shape[0] != precision.shape[0]:
            raise ContractViolationError(
                f"Dimension mismatch: precision {precision.shape}, "
                f"precision-weighted mean {weighted_mean.shape}"
            )

        scale = max(1.0, float(np.max(np.abs(precision)))) if precision.size else 1.0
        if np.max(np.abs(precision - precision.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
            raise ContractViolationError("Precision matrix is not symmetric")

        object.__setattr__(self, "precision", _readonly(0.5 * (precision + precision.T)))
        object.__setattr__(self, "precision_weighted_mean", _readonly(weighted_mean))

    @property
    def dimension(self) -> int:
        return self.precision.shape[0]

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of the precision (raises for improper beliefs)."""
        return _cholesky(self.precision)

    @property
    def condition_bound(self) -> float:
        return _condition_bound(self.cholesky)

    def is_well_conditioned(self) -> bool:
        return self.condition_bound <= MAX_CONDITION_NUMBER

    def check_conditioning(self) -> None:
        """
        Gate for covariance and predictive-variance queries. Means and the
        quadratic forms used inside the updates only need a PD precision.

        Raises:
            NumericalConditioningError: condition number above 1e12
        """
        bound = self.condition_bound
        if bound > MAX_CONDITION_NUMBER:
            raise NumericalConditioningError(f"Precision matrix condition number exceeds 1e12 (>= {bound:.3g})")

    def mean(self) -> np.ndarray:
        return linalg.cho_solve((self.cholesky, True), self.precision_weighted_mean)

    def covariance(self) -> np.ndarray:
        self.check_conditioning()
        return linalg.cho_solve((self.cholesky, True), np.eye(self.dimension))

    def quadratic_form(self, phi: np.ndarray) -> float:
        """phi^T Lambda^{-1} phi without forming the covariance."""
        half = linalg.solve_triangular(self.cholesky, np.asarray(phi, dtype=float), lower=True)
        return float(half @ half)

    def log_det_precision(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.cholesky))))

    def is_proper(self) -> bool:
        try:
            self.cholesky
        except NumericalConditioningError:
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "precision": self.precision.tolist(),
            "precision_weighted_mean": self.precision_weighted_mean.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianBelief":
        return cls(
            precision=np.asarray(data["precision"], dtype=float),
            precision_weighted_mean=np.asarray(data["precision_weighted_mean"], dtype=float),
        )


@dataclass(frozen=True)
class GammaBelief:
    """Gamma distribution in shape/rate form."""
    shape: float
    rate: float

    def __post_init__(self):
        shape = float(self.shape)
        rate = float(self.rate)
        if not (np.isfinite(shape) and np.isfinite(rate)) or shape <= 0.0 or rate <= 0.0:
            raise DegenerateBeliefError(f"Invalid Gamma parameters: shape={shape}, rate={rate}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "rate", rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate ** 2

    @property
    def expected_log(self) -> float:
        return float(digamma(self.shape) - np.log(self.rate))

    def to_dict(self) -> Dict[str, Any]:
        return {"shape": self.shape, "rate": self.rate}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GammaBelief":
        return cls(shape=data["shape"], rate=data["rate"])


# =========================================================================
# Constructors
# =========================================================================

def gaussian_from_moments(mean: np.ndarray, covariance: np.ndarray) -> GaussianBelief:
    """
    Build an information-form belief from mean and covariance.

    Args:
        mean: Mean vector (D)
        covariance: Covariance matrix (D x D), positive definite

    Returns:
        GaussianBelief with precision = covariance^{-1}
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    covariance = np.array(covariance, dtype=float, ndmin=2)
    factor = _cholesky(covariance, ContractViolationError)
    precision = linalg.cho_solve((factor, True), np.eye(mean.shape[0]))
    return GaussianBelief(precision, precision @ mean)


def isotropic_prior(dimension: int, mean: float = 0.0, precision: float = 1.0) -> GaussianBelief:
    """N(mean * 1, precision^{-1} I) in information form."""
    if dimension < 1 or precision <= 0.0:
        raise ContractViolationError(
            f"Isotropic prior needs dimension >= 1 and precision > 0, got {dimension}, {precision}"
        )
    return GaussianBelief(precision * np.eye(dimension), precision * mean * np.ones(dimension))


def null_message(dimension: int) -> GaussianBelief:
    """Vacuous Gaussian message (zero precision)."""
    return GaussianBelief(np.zeros((dimension, dimension)), np.zeros(dimension))


# =========================================================================
# Products (equality-node combination)
# =========================================================================

def gaussian_product(a: GaussianBelief, b: GaussianBelief) -> GaussianBelief:
    """Product of two Gaussian densities: precisions and weighted means add."""
    if a.dimension != b.dimension:
        raise ContractViolationError(f"Dimension mismatch: {a.dimension} vs {b.dimension}")
    return GaussianBelief(
        a.precision + b.precision,
        a.precision_weighted_mean + b.precision_weighted_mean,
    )


def gamma_product(a: GammaBelief, b: GammaBelief) -> GammaBelief:
    """Product of two Gamma densities: shape a+b-1, rate a+b."""
    # (b.shape - 1) first keeps half-integer increments exact
    shape = a.shape + (b.shape - 1.0)
    if shape <= 0.0:
        raise DegenerateBeliefError(f"Gamma product has non-positive shape {shape}")
    return GammaBelief(shape, a.rate + b.rate)


# =========================================================================
# Moments, entropies and divergences
# =========================================================================

def gamma_moments(g: GammaBelief) -> Tuple[float, float, float]:
    """Return (mean, variance, E[ln tau])."""
    return g.mean, g.variance, g.expected_log


def gaussian_entropy(g: GaussianBelief) -> float:
    d = g.dimension
    return 0.5 * d * (1.0 + np.log(2.0 * np.pi)) - 0.5 * g.log_det_precision()


def gamma_entropy(g: GammaBelief) -> float:
    a, b = g.shape, g.rate
    return float(a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a))


def gaussian_kl(q: GaussianBelief, p: GaussianBelief) -> float:
    """
    KL(q || p) for two proper Gaussians in information form.

    Raises:
        ContractViolationError: on dimension mismatch or a non-PD input
    """
    if q.dimension != p.dimension:
        raise ContractViolationError(f"Dimension mismatch: {q.dimension} vs {p.dimension}")

    try:
        q_factor, p_factor = q.cholesky, p.cholesky
    except NumericalConditioningError as e:
        raise ContractViolationError(f"gaussian_kl needs proper beliefs: {e}") from e

    q_mean = linalg.cho_solve((q_factor, True), q.precision_weighted_mean)
    p_mean = linalg.cho_solve((p_factor, True), p.precision_weighted_mean)
    q_covariance = linalg.cho_solve((q_factor, True), np.eye(q.dimension))

    diff = p_mean - q_mean
    trace_term = float(np.sum(p.precision * q_covariance))
    mahalanobis = float(diff @ p.precision @ diff)
    log_det_q = 2.0 * np.sum(np.log(np.diag(q_factor)))
    log_det_p = 2.0 * np.sum(np.log(np.diag(p_factor)))

    kl = 0.5 * (trace_term + mahalanobis - q.dimension + log_det_q - log_det_p)
    return max(0.0, float(kl))


def gamma_kl(q: GammaBelief, p: GammaBelief) -> float:
    """KL(q || p) for shape/rate Gamma distributions."""
    if not isinstance(q, GammaBelief) or not isinstance(p, GammaBelief):
        raise ContractViolationError("gamma_kl expects two GammaBelief values")

    kl = (
        (q.shape - p.shape) * digamma(q.shape)
        - gammaln(q.shape)
        + gammaln(p.shape)
        + p.shape * (np.log(q.rate) - np.log(p.rate))
        + q.shape * (p.rate - q.rate) / q.rate
    )
    return max(0.0, float(kl))
