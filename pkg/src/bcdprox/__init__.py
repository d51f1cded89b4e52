"""Joint estimation of ODE states and parameters from noisy, discretely sampled trajectories."""

from bcdprox.baselines import ekf_run, shooting_lsq
from bcdprox.discretize import TimeGrid, TimeSeries, ab_coefficients, forward_predict, rk_integrate
from bcdprox.errors import (
    ConditioningError,
    ConfigError,
    ContractError,
    DivergedError,
    NumericDomainError,
)
from bcdprox.models import BENCHMARKS, benchmark_registry, make_model
from bcdprox.objective import FidelityProblem, fidelity, prox_objective
from bcdprox.solver import EstimationResult, SolverConfig, bcd_prox, bcd_prox_split

__all__ = [
    "BENCHMARKS", "ConditioningError", "ConfigError", "ContractError", "DivergedError",
    "EstimationResult", "FidelityProblem", "NumericDomainError", "SolverConfig", "TimeGrid",
    "TimeSeries", "ab_coefficients", "bcd_prox", "bcd_prox_split", "benchmark_registry",
    "ekf_run", "fidelity", "forward_predict", "make_model", "prox_objective", "rk_integrate",
    "shooting_lsq",
]
