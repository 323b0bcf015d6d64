"""Seeded simulation scenarios shipped with the package."""

from __future__ import annotations

import math

import numpy as np

from ..data import Dataset
from .generate import SimConfig, SimTruth, simulate


def _default() -> SimConfig:
    # one strong drug, three moderate ones, sixteen nulls
    beta = [2.0, 0.7, -0.6, 0.4] + [0.0] * 16
    prevalence = [0.05, 0.08, 0.08, 0.08] + [0.04] * 16
    return SimConfig(n_subjects=2000, n_drugs=20, true_beta=beta, prevalence=prevalence,
                     era_count=(2, 6), era_length=(10, 120),
                     baseline_mean=math.log(1 / 400), baseline_sd=0.5, seed=20111)


def _bench() -> SimConfig:
    rng = np.random.default_rng(2011)
    J = 500
    prevalence = rng.uniform(0.002, 0.016, size=J)
    beta = np.zeros(J)
    beta[rng.choice(J, 25, replace=False)] = rng.choice([-1.0, -0.5, 0.5, 1.0], 25)
    return SimConfig(n_subjects=100_000, n_drugs=J, true_beta=tuple(beta),
                     prevalence=tuple(prevalence), era_count=(2, 8), era_length=(5, 120),
                     baseline_mean=math.log(1 / 300), baseline_sd=0.5, seed=2012,
                     stop_at_kept=20_000)


SCENARIOS = {
    "default": _default,
    "bench": _bench,
}

# the planted strong effect and a designated null drug of the default scenario
DEFAULT_STRONG_DRUG = 0
DEFAULT_NULL_DRUG = 19


def scenario_config(name: str) -> SimConfig:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def load_scenario(name: str) -> tuple[Dataset, SimTruth]:
    return simulate(scenario_config(name))


def small_instance_config(seed: int, max_subjects: int = 50, max_drugs: int = 10,
                          max_eras: int = 6) -> SimConfig:
    """Random small problem used by the equivalence suites."""
    rng = np.random.default_rng([7919, seed])
    J = int(rng.integers(1, max_drugs + 1))
    N = int(rng.integers(5, max_subjects + 1))
    return SimConfig(
        n_subjects=10 * N, n_drugs=J,
        true_beta=tuple(rng.normal(0.0, 0.7, size=J)),
        prevalence=tuple(rng.uniform(0.1, 0.6, size=J)),
        era_count=(1, max_eras), era_length=(1, 30),
        baseline_mean=math.log(1 / 15), baseline_sd=0.5,
        seed=int(rng.integers(2**31)), stop_at_kept=N,
    )


def small_instance(seed: int, **kwargs) -> Dataset:
    return simulate(small_instance_config(seed, **kwargs))[0]
