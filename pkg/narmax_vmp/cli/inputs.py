"""
File decoding for the command line: signal CSVs, identification configs and
experiment plans. Every decoding problem is raised as InputFormatError or
ConfigurationError so commands can map it to exit code 2.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from estimator.basis import BasisSpec, NarmaxConfig
from estimator.beliefs import GammaBelief, GaussianBelief
from estimator.errors import (
    ConfigurationError,
    ContractViolationError,
    DegenerateBeliefError,
    InputFormatError,
    config_value,
)
from estimator.predict import DIVERGENCE_FACTOR, DIVERGENCE_FLOOR
from estimator.vmp import DEFAULT_PRIOR_RATE, DEFAULT_PRIOR_SHAPE, VmpSettings
from experiments.harness import ExperimentPlan

logger = logging.getLogger(__name__)

SIGNAL_COLUMNS = ["t", "u", "y"]


def read_csv_columns(path: Union[str, Path], columns: Sequence[str]) -> Dict[str, np.ndarray]:
    """
    Read a comma-separated file with a mandatory header and return the
    requested columns as float arrays.

    Line numbers in errors are 1-based file lines (the header is line 1).

    Raises:
        InputFormatError: missing file, missing header/columns, ragged rows,
            non-numeric or non-finite cells
    """
    path = Path(path)
    if not path.is_file():
        raise InputFormatError(f"{path} does not exist")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise InputFormatError("file is empty, expected a header row", line_number=1)
    except pd.errors.ParserError as e:
        raise InputFormatError(f"{path}: {e}") from e

    header = [c.strip() for c in frame.columns]
    missing = [c for c in columns if c not in header]
    if missing:
        raise InputFormatError(
            f"header {','.join(header)!r} lacks column(s) {missing}; expected {','.join(columns)}",
            line_number=1,
        )
    frame.columns = header

    result = {}
    for column in columns:
        raw = frame[column]
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise InputFormatError(
                f"column {column!r} holds {raw.iloc[row]!r}, expected a finite number",
                line_number=row + 2,
            )
        result[column] = values
    return result


def read_signal_csv(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """(u, y) from a t,u,y file."""
    data = read_csv_columns(path, SIGNAL_COLUMNS)
    return data["u"], data["y"]


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"{path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}") from e


# =========================================================================
# Identification config
# =========================================================================

def _float_array(name: str, value: Any) -> np.ndarray:
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} must be numeric, got {value!r}") from e


@dataclass
class IdentifyConfig:
    """Decoded identification config; every section is optional."""
    narmax: NarmaxConfig = field(default_factory=NarmaxConfig)
    prior_mean: Union[float, List[float]] = 0.0
    prior_precision: Union[float, List[List[float]]] = 1.0
    prior_shape: float = DEFAULT_PRIOR_SHAPE
    prior_rate: float = DEFAULT_PRIOR_RATE
    vmp: VmpSettings = field(default_factory=VmpSettings)
    divergence_factor: float = DIVERGENCE_FACTOR
    divergence_floor: float = DIVERGENCE_FLOOR

    SECTIONS = ("narmax", "priors", "vmp", "divergence")

    def priors(self, spec: BasisSpec) -> Tuple[GaussianBelief, GammaBelief]:
        """
        Prior beliefs sized for ``spec``.

        Raises:
            ConfigurationError: sizes do not match the basis dimension, or the
                priors are not valid beliefs
        """
        d = spec.dimension
        if np.ndim(self.prior_mean) == 0:
            mean = config_value("priors.mean", self.prior_mean, float) * np.ones(d)
        else:
            mean = _float_array("priors.mean", self.prior_mean)
        if mean.shape != (d,):
            raise ConfigurationError(f"priors.mean has {mean.size} entries, basis dimension is {d}")

        if np.ndim(self.prior_precision) == 0:
            precision = config_value("priors.precision", self.prior_precision, float) * np.eye(d)
        else:
            precision = _float_array("priors.precision", self.prior_precision)
        if precision.shape != (d, d):
            raise ConfigurationError(f"priors.precision has shape {precision.shape}, expected ({d}, {d})")

        try:
            theta = GaussianBelief(precision, precision @ mean)
            if not theta.is_proper():
                raise ConfigurationError("priors.precision is not positive definite")
            tau = GammaBelief(self.prior_shape, self.prior_rate)
        except (ContractViolationError, DegenerateBeliefError) as e:
            raise ConfigurationError(f"Invalid prior: {e}") from e
        return theta, tau

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IdentifyConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("Identification config must be a JSON object")
        unknown = set(data) - set(cls.SECTIONS)
        if unknown:
            raise ConfigurationError(f"Unknown config sections: {sorted(unknown)}")

        priors = data.get("priors", {})
        divergence = data.get("divergence", {})
        for name, section in (("priors", priors), ("divergence", divergence)):
            if not isinstance(section, dict):
                raise ConfigurationError(f"{name} must be a JSON object, got {section!r}")
        unknown = (set(priors) - {"mean", "precision", "shape", "rate"}) | (set(divergence) - {"factor", "floor"})
        if unknown:
            raise ConfigurationError(f"Unknown config keys: {sorted(unknown)}")

        return cls(
            narmax=NarmaxConfig.from_dict(data.get("narmax", {})),
            prior_mean=priors.get("mean", 0.0),
            prior_precision=priors.get("precision", 1.0),
            prior_shape=config_value("priors.shape", priors.get("shape", DEFAULT_PRIOR_SHAPE), float),
            prior_rate=config_value("priors.rate", priors.get("rate", DEFAULT_PRIOR_RATE), float),
            vmp=VmpSettings.from_dict(data.get("vmp", {})),
            divergence_factor=config_value("divergence.factor", divergence.get("factor", DIVERGENCE_FACTOR), float),
            divergence_floor=config_value("divergence.floor", divergence.get("floor", DIVERGENCE_FLOOR), float),
        )


def load_identify_config(path: Optional[Union[str, Path]]) -> IdentifyConfig:
    """Defaults when no path is given."""
    if path is None:
        return IdentifyConfig()
    return IdentifyConfig.from_dict(read_json(path))


def load_plan(path: Union[str, Path]) -> ExperimentPlan:
    return ExperimentPlan.from_dict(read_json(path))
