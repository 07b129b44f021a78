"""Charge-then-forward relaying: a hybrid relay first powers its sources
wirelessly, then forwards their data by TDMA or FDMA."""

from .model import (ChannelInstance, DegenerateGeometryError, Geometry, Layout, SystemParams,
                    dbm_to_watts, draw_instance, generate_instance, noise_power, watts_to_dbm)
from .numerics import ConvergenceError, InfeasibleError
from .tdma import (TdmaAllocation, solve_tdma_eea, solve_tdma_era, solve_tdma_optimal,
                   solve_tdma_suboptimal, tdma_violations)
from .fdma import (FdmaAllocation, fdma_violations, solve_fdma_eea, solve_fdma_fsa,
                   solve_fdma_optimal, solve_fdma_suboptimal, solve_fixed_assignment)
from .harness import ExperimentResult, ExperimentSpec, measure_duality_gap, run_experiment

__all__ = [
    "ChannelInstance", "DegenerateGeometryError", "Geometry", "Layout", "SystemParams",
    "dbm_to_watts", "draw_instance", "generate_instance", "noise_power", "watts_to_dbm",
    "ConvergenceError", "InfeasibleError",
    "TdmaAllocation", "solve_tdma_eea", "solve_tdma_era", "solve_tdma_optimal",
    "solve_tdma_suboptimal", "tdma_violations",
    "FdmaAllocation", "fdma_violations", "solve_fdma_eea", "solve_fdma_fsa",
    "solve_fdma_optimal", "solve_fdma_suboptimal", "solve_fixed_assignment",
    "ExperimentResult", "ExperimentSpec", "measure_duality_gap", "run_experiment",
]
