"""
Benchmark experiments for the NARMAX estimators.

Provides:
- Multisine excitation and pseudo-random benchmark systems
- Seeded sample-size and noise-level sweeps with per-run records
- Aggregation into mean/SEM tables and SVG charts
- Optional SQL persistence of experiment results
"""

from .datagen import (
    BENCHMARK_CONFIG,
    MultisineSpec,
    SystemSpec,
    RealizationSeeds,
    realization_streams,
    generate_multisine,
    butterworth_coefficients,
    generate_system,
    simulate_system,
    write_signal_csv,
)
from .harness import (
    ExperimentPlan,
    VmpPriors,
    RunRecord,
    AggregateRow,
    preset_plan,
    rms,
    aggregate,
    run_realization,
    run_plan,
    records_frame,
    aggregates_frame,
    write_table,
)
from .plotting import plot_sweep, write_sweep_svg
from .database import ResultsDatabase, ExperimentRun, RunRecordRow

__all__ = [
    # Data generation
    "BENCHMARK_CONFIG",
    "MultisineSpec",
    "SystemSpec",
    "RealizationSeeds",
    "realization_streams",
    "generate_multisine",
    "butterworth_coefficients",
    "generate_system",
    "simulate_system",
    "write_signal_csv",
    # Harness
    "ExperimentPlan",
    "VmpPriors",
    "RunRecord",
    "AggregateRow",
    "preset_plan",
    "rms",
    "aggregate",
    "run_realization",
    "run_plan",
    "records_frame",
    "aggregates_frame",
    "write_table",
    # Plotting
    "plot_sweep",
    "write_sweep_svg",
    # Persistence
    "ResultsDatabase",
    "ExperimentRun",
    "RunRecordRow",
]
