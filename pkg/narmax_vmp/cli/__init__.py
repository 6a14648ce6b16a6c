"""
Command-line front end: identify, simulate, generate, experiment and plot.
"""

from .commands import (
    EXIT_OK,
    EXIT_INPUT_ERROR,
    EXIT_NUMERICAL_FAILURE,
    cmd_identify,
    cmd_simulate,
    cmd_generate,
    cmd_experiment,
    cmd_plot,
)
from .inputs import IdentifyConfig, load_identify_config, load_plan, read_csv_columns, read_signal_csv

__all__ = [
    "EXIT_OK",
    "EXIT_INPUT_ERROR",
    "EXIT_NUMERICAL_FAILURE",
    "cmd_identify",
    "cmd_simulate",
    "cmd_generate",
    "cmd_experiment",
    "cmd_plot",
    "IdentifyConfig",
    "load_identify_config",
    "load_plan",
    "read_csv_columns",
    "read_signal_csv",
]
