"""Synthetic data generation, replicated experiments and the command line interface."""

from bcdprox.harness.config import ExperimentConfig, config_from_dict, load_config
from bcdprox.harness.data import NoiseSpec, generate_dataset, perturb_parameters
from bcdprox.harness.experiment import RunResult, run_experiment, sweep_axis, sweep_lambda

__all__ = [
    "ExperimentConfig", "NoiseSpec", "RunResult", "config_from_dict", "generate_dataset",
    "load_config", "perturb_parameters", "run_experiment", "sweep_axis", "sweep_lambda",
]
