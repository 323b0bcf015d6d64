"""Synthetic data generation and brute-force oracles."""

from .generate import SimConfig, SimTruth, simulate, simulate_records, write_simulation
from .oracles import oracle_curvature, oracle_gradient, oracle_log_likelihood, reference_fit
from .scenarios import (DEFAULT_NULL_DRUG, DEFAULT_STRONG_DRUG, SCENARIOS, load_scenario,
                        scenario_config, small_instance, small_instance_config)

__all__ = [
    "SimConfig", "SimTruth", "simulate", "simulate_records", "write_simulation",
    "oracle_log_likelihood", "oracle_gradient", "oracle_curvature", "reference_fit",
    "SCENARIOS", "DEFAULT_STRONG_DRUG", "DEFAULT_NULL_DRUG", "load_scenario",
    "scenario_config", "small_instance", "small_instance_config",
]
