"""
Process-level settings read from the environment (after load_dotenv).
"""

import logging
import os
from dataclasses import dataclass
from typing import Mapping, Optional

from estimator.errors import ConfigurationError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _int_env(env: Mapping[str, str], name: str, default: int) -> int:
    raw = env.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}")


@dataclass(frozen=True)
class Settings:
    seed: int = 0
    jobs: int = 1
    results_database_url: Optional[str] = None
    log_level: str = "INFO"
    sql_echo: bool = False

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None) -> "Settings":
        """
        Raises:
            ConfigurationError: a variable holds an unusable value
        """
        env = os.environ if env is None else env

        log_level = env.get("LOG_LEVEL", "INFO").upper()
        if log_level not in LOG_LEVELS:
            raise ConfigurationError(f"LOG_LEVEL must be one of {LOG_LEVELS}, got {log_level!r}")

        jobs = _int_env(env, "NARMAX_VMP_JOBS", 1)
        if jobs < 1:
            raise ConfigurationError(f"NARMAX_VMP_JOBS must be >= 1, got {jobs}")

        return cls(
            seed=_int_env(env, "NARMAX_VMP_SEED", 0),
            jobs=jobs,
            results_database_url=env.get("RESULTS_DATABASE_URL") or None,
            log_level=log_level,
            sql_echo=env.get("SQL_ECHO", "false").lower() == "true",
        )

    @property
    def logging_level(self) -> int:
        return getattr(logging, self.log_level)
