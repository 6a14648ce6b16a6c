"""
Benchmark data generation: random-phase multisine excitation, pseudo-random
polynomial NARMAX systems and noisy system simulation.

Randomness comes from numpy's PCG64 generator. Every realization owns its
own SeedSequence, keyed by (realization, attempt) under the base seed, and
splits it into named child streams. Results therefore do not depend on the
order or the thread in which realizations are generated.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal

from estimator.basis import BasisSpec, NarmaxConfig, RegressorBuffer, enumerate_monomials, expand, push
from estimator.errors import ConfigurationError, NonFiniteSignalError, UnstableSystemError

logger = logging.getLogger(__name__)

STREAM_NAMES = ("input", "validation_input", "system", "noise", "validation_noise")

# Output magnitude treated as a blown-up draw
UNSTABLE_OUTPUT_LIMIT = 1e6

BENCHMARK_CONFIG = NarmaxConfig(
    input_delays=1,
    output_delays=1,
    error_delays=1,
    degree=3,
    include_constant=True,
    error_cross_terms=False,
)


@dataclass(frozen=True)
class MultisineSpec:
    """Equally spaced excited lines with random phases, rescaled to a target std."""
    n_frequencies: int = 100
    f_low: float = 1.0
    f_high: float = 100.0
    sample_rate: float = 1000.0
    amplitude_norm: float = 1.0
    seed: int = 0
    random_phase: bool = True

    def __post_init__(self):
        if self.n_frequencies < 1:
            raise ConfigurationError(f"n_frequencies must be >= 1, got {self.n_frequencies}")
        if self.f_high > self.sample_rate / 2:
            raise ConfigurationError(
                f"f_high={self.f_high} exceeds the Nyquist frequency {self.sample_rate / 2}"
            )
        if self.f_low > self.f_high:
            raise ConfigurationError(f"f_low={self.f_low} is above f_high={self.f_high}")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A polynomial NARMAX system with coefficients in BasisSpec order."""
    config: NarmaxConfig
    coefficients: np.ndarray
    noise_std: float = 0.02
    seed: int = 0
    spec: BasisSpec = field(init=False, repr=False)

    def __post_init__(self):
        spec = enumerate_monomials(self.config)
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != spec.dimension:
            raise ConfigurationError(
                f"System has {coefficients.shape[0]} coefficients, basis needs {spec.dimension}"
            )
        if self.noise_std < 0:
            raise ConfigurationError(f"noise_std must be >= 0, got {self.noise_std}")
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "coefficients", coefficients)

    def with_noise(self, noise_std: float) -> "SystemSpec":
        return SystemSpec(self.config, self.coefficients, noise_std, self.seed)


@dataclass(frozen=True)
class RealizationSeeds:
    """Named child seed sequences of one realization."""
    streams: Dict[str, np.random.SeedSequence]

    def generator(self, name: str) -> np.random.Generator:
        """A fresh generator; calling twice replays the same stream."""
        return np.random.Generator(np.random.PCG64(self.streams[name]))


def realization_streams(base_seed: int, realization: int, attempt: int = 0) -> RealizationSeeds:
    root = np.random.SeedSequence(base_seed, spawn_key=(realization, attempt))
    return RealizationSeeds(dict(zip(STREAM_NAMES, root.spawn(len(STREAM_NAMES)))))


# =========================================================================
# Excitation
# =========================================================================

def generate_multisine(
    spec: MultisineSpec,
    length: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    u_t = sum_i sin(2 pi f_i t / fs + psi_i), rescaled to std amplitude_norm.

    Args:
        spec: Multisine description
        length: Number of samples
        rng: Phase generator; defaults to one seeded with spec.seed

    Returns:
        Input signal of the requested length
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    frequencies = np.linspace(spec.f_low, spec.f_high, spec.n_frequencies)
    if spec.random_phase:
        phases = rng.uniform(0.0, 2.0 * np.pi, spec.n_frequencies)
    else:
        phases = np.zeros(spec.n_frequencies)

    t = np.arange(length)[:, np.newaxis]
    u = np.sin(2.0 * np.pi * frequencies[np.newaxis, :] * t / spec.sample_rate + phases).sum(axis=1)

    std = np.std(u)
    if std == 0.0:
        return u
    return u * (spec.amplitude_norm / std)


# =========================================================================
# Systems
# =========================================================================

def butterworth_coefficients(cutoff: float = 100.0, sample_rate: float = 1000.0) -> Tuple[float, float, float]:
    """
    First-order digital Butterworth low-pass (bilinear transform with
    prewarping). Returns (b0, b1, y-coefficient) where the y-coefficient is
    the negated denominator term, ready for y[k] = b0 u[k] + b1 u[k-1] + c y[k-1].
    """
    b, a = signal.butter(1, cutoff, btype="low", fs=sample_rate)
    return float(b[0]), float(b[1]), float(-a[1])


def generate_system(
    seed: int,
    noise_std: float = 0.02,
    cutoff: float = 100.0,
    sample_rate: float = 1000.0,
    coefficient_spread: Literal["width", "halfwidth"] = "width",
    error_coefficient: float = 0.1,
    rng: Optional[np.random.Generator] = None,
) -> SystemSpec:
    """
    Benchmark system: M1 = M2 = M3 = 1, degree 3, error terms only as pure
    powers. Linear input/output terms carry Butterworth filter coefficients,
    e[k-1] carries ``error_coefficient`` and everything else is drawn
    uniformly around zero. ``coefficient_spread`` "width" reads the spread
    0.01 as the total interval width (+-0.005), "halfwidth" as +-0.01.
    """
    if coefficient_spread not in ("width", "halfwidth"):
        raise ConfigurationError(f"Unknown coefficient_spread {coefficient_spread!r}")
    rng = rng if rng is not None else np.random.default_rng(seed)

    spec = enumerate_monomials(BENCHMARK_CONFIG)
    half_width = 0.005 if coefficient_spread == "width" else 0.01
    coefficients = rng.uniform(-half_width, half_width, spec.dimension)

    b0, b1, c1 = butterworth_coefficients(cutoff, sample_rate)
    coefficients[spec.index_of((1, 0, 0, 0))] = b0
    coefficients[spec.index_of((0, 1, 0, 0))] = b1
    coefficients[spec.index_of((0, 0, 1, 0))] = c1
    coefficients[spec.index_of((0, 0, 0, 1))] = error_coefficient

    return SystemSpec(BENCHMARK_CONFIG, coefficients, noise_std, seed)


def simulate_system(
    system: SystemSpec,
    inputs: Sequence[float],
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    y_k = theta^T phi(u_k, u_{k-1}, y_{k-1}, e_{k-1}) + e_k with the true
    past noise values in the error history.

    Returns:
        (outputs, noises)

    Raises:
        UnstableSystemError: the output became non-finite or exploded
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    inputs = np.asarray(inputs, dtype=float)
    noises = rng.standard_normal(len(inputs)) * system.noise_std
    outputs = np.empty(len(inputs))

    buffer = RegressorBuffer.zeros(system.config)
    try:
        for k, (u, e) in enumerate(zip(inputs, noises)):
            y = float(system.coefficients @ expand(system.spec, u, buffer)) + e
            if not np.isfinite(y) or abs(y) > UNSTABLE_OUTPUT_LIMIT:
                raise UnstableSystemError(f"System output diverged at sample {k}: {y}")
            outputs[k] = y
            buffer = push(buffer, u, y, e)
    except NonFiniteSignalError as e:
        raise UnstableSystemError(f"System produced a non-finite signal: {e}") from e

    return outputs, noises


def write_signal_csv(inputs: Sequence[float], outputs: Sequence[float], path: Union[str, Path]) -> None:
    """Columns t, u, y."""
    frame = pd.DataFrame({
        "t": np.arange(len(inputs)),
        "u": np.asarray(inputs, dtype=float),
        "y": np.asarray(outputs, dtype=float),
    })
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
