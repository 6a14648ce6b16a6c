"""
Polynomial NARMAX basis: monomial enumeration, delayed-signal buffer and
regressor evaluation.

Signal variables are ordered (u[k], u[k-1..k-M1], y[k-1..k-M2], e[k-1..k-M3]);
every history is stored most-recent-first.
"""

import itertools
import logging
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ContractViolationError, NonFiniteSignalError, config_value

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NarmaxConfig:
    """Delays, degree and term-selection switches of a polynomial NARMAX model."""
    input_delays: int = 1
    output_delays: int = 1
    error_delays: int = 1
    degree: int = 3
    include_constant: bool = True
    error_cross_terms: bool = False

    def __post_init__(self):
        for name in ("input_delays", "output_delays", "error_delays", "degree"):
            object.__setattr__(self, name, config_value(name, getattr(self, name), int))
        for name in ("include_constant", "error_cross_terms"):
            config_value(name, getattr(self, name), bool)

        for name in ("input_delays", "output_delays", "error_delays"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.degree < 1:
            raise ConfigurationError(f"degree must be >= 1, got {self.degree}")

    @property
    def n_variables(self) -> int:
        return 1 + self.input_delays + self.output_delays + self.error_delays

    def variable_names(self) -> List[str]:
        names = ["u[k]"]
        names += [f"u[k-{i}]" for i in range(1, self.input_delays + 1)]
        names += [f"y[k-{i}]" for i in range(1, self.output_delays + 1)]
        names += [f"e[k-{i}]" for i in range(1, self.error_delays + 1)]
        return names

    def error_slice(self) -> slice:
        start = 1 + self.input_delays + self.output_delays
        return slice(start, start + self.error_delays)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NarmaxConfig":
        if not isinstance(data, dict):
            raise ConfigurationError(f"NARMAX config must be a JSON object, got {data!r}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"Unknown NARMAX config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class BasisSpec:
    """Ordered monomial exponent table defining phi."""
    config: NarmaxConfig
    exponents: Tuple[Tuple[int, ...], ...]

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    @cached_property
    def exponent_matrix(self) -> np.ndarray:
        matrix = np.asarray(self.exponents, dtype=float).reshape(self.dimension, self.config.n_variables)
        matrix.setflags(write=False)
        return matrix

    def index_of(self, exponent: Sequence[int]) -> int:
        """Position of a monomial in the table (ValueError if absent)."""
        return self.exponents.index(tuple(int(x) for x in exponent))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "exponents": [list(e) for e in self.exponents],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BasisSpec":
        config = NarmaxConfig.from_dict(data["config"])
        spec = enumerate_monomials(config)
        stored = tuple(tuple(int(x) for x in e) for e in data.get("exponents", spec.exponents))
        if stored != spec.exponents:
            raise ConfigurationError("Stored exponent table does not match its NARMAX config")
        return spec


def _mixes_errors(exponent: Tuple[int, ...], error_slice: slice) -> bool:
    error_part = exponent[error_slice]
    if not any(error_part):
        return False
    # pure power of a single error variable is the only allowed form
    return sum(1 for x in exponent if x > 0) > 1


def enumerate_monomials(config: NarmaxConfig) -> BasisSpec:
    """
    Enumerate all monomials of total degree <= d in graded-lex order
    (total degree ascending, then lexicographic on the exponent tuple).
    """
    n = config.n_variables
    error_slice = config.error_slice()
    exponents = set()

    first_degree = 0 if config.include_constant else 1
    for total in range(first_degree, config.degree + 1):
        for combination in itertools.combinations_with_replacement(range(n), total):
            exponent = [0] * n
            for variable in combination:
                exponent[variable] += 1
            exponent = tuple(exponent)
            if not config.error_cross_terms and _mixes_errors(exponent, error_slice):
                continue
            exponents.add(exponent)

    ordered = tuple(sorted(exponents, key=lambda e: (sum(e), e)))
    logger.debug(f"Enumerated {len(ordered)} monomials for {config}")
    return BasisSpec(config=config, exponents=ordered)


def describe_monomial(spec: BasisSpec, index: int) -> str:
    """Readable name of one monomial, e.g. 'u[k]*y[k-1]^2'."""
    names = spec.config.variable_names()
    factors = []
    for name, power in zip(names, spec.exponents[index]):
        if power == 1:
            factors.append(name)
        elif power > 1:
            factors.append(f"{name}^{power}")
    return "*".join(factors) if factors else "1"


@dataclass(frozen=True, eq=False)
class RegressorBuffer:
    """Rolling delayed inputs, outputs and prediction errors (most recent first)."""
    u_hist: np.ndarray
    y_hist: np.ndarray
    e_hist: np.ndarray

    def __post_init__(self):
        for name in ("u_hist", "y_hist", "e_hist"):
            array = np.array(getattr(self, name), dtype=float).reshape(-1)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @classmethod
    def zeros(cls, config: NarmaxConfig) -> "RegressorBuffer":
        return cls(
            np.zeros(config.input_delays),
            np.zeros(config.output_delays),
            np.zeros(config.error_delays),
        )

    def lengths(self) -> Tuple[int, int, int]:
        return len(self.u_hist), len(self.y_hist), len(self.e_hist)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "u_hist": self.u_hist.tolist(),
            "y_hist": self.y_hist.tolist(),
            "e_hist": self.e_hist.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegressorBuffer":
        return cls(data["u_hist"], data["y_hist"], data["e_hist"])


def _shift(history: np.ndarray, value: float) -> np.ndarray:
    if history.size == 0:
        return history
    return np.concatenate(([value], history[:-1]))


def push(buffer: RegressorBuffer, u: float, y: float, e: float) -> RegressorBuffer:
    """Shift each history by one, newest value at position 0."""
    if not (np.isfinite(u) and np.isfinite(y) and np.isfinite(e)):
        raise NonFiniteSignalError(f"Non-finite signal pushed into buffer: u={u}, y={y}, e={e}")
    return RegressorBuffer(
        _shift(buffer.u_hist, float(u)),
        _shift(buffer.y_hist, float(y)),
        _shift(buffer.e_hist, float(e)),
    )


def expand(spec: BasisSpec, u_now: float, buffer: RegressorBuffer) -> np.ndarray:
    """
    Evaluate phi_k = phi(u_k, u_{k-1}, y_{k-1}, e_{k-1}).

    Raises:
        ContractViolationError: buffer lengths disagree with the basis config
        NonFiniteSignalError: any signal value is NaN or infinite
    """
    config = spec.config
    expected = (config.input_delays, config.output_delays, config.error_delays)
    if buffer.lengths() != expected:
        raise ContractViolationError(f"Buffer lengths {buffer.lengths()} do not match config {expected}")

    x = np.concatenate(([float(u_now)], buffer.u_hist, buffer.y_hist, buffer.e_hist))
    if not np.all(np.isfinite(x)):
        raise NonFiniteSignalError(f"Non-finite regressor signal: {x}")

    # 0.0 ** 0 == 1.0, so the constant monomial evaluates to one
    return np.prod(np.power(x[np.newaxis, :], spec.exponent_matrix), axis=1)
