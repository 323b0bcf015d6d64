"""Synthetic case series drawn from the Poisson era model.

Each subject gets a random number of eras, random era lengths, independent
Bernoulli exposures and a baseline log-rate ``phi``; era event counts are
Poisson with mean ``length * exp(phi + x'beta)``. Subjects without events
are discarded, which is exactly the cases-only filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np

from ..data import Dataset, Era, SubjectRecord, build_dataset, write_long_format
from ..errors import DatasetError


@dataclass(frozen=True)
class SimConfig:
    """Generator settings.

    ``era_count`` and ``era_length`` are inclusive integer ranges.
    ``prevalence`` is a scalar or one value per drug. Generation stops after
    ``n_subjects`` attempts, or earlier once ``stop_at_kept`` subjects with
    events have been produced.
    """

    n_subjects: int
    n_drugs: int
    true_beta: Sequence[float] | None = None
    prevalence: float | Sequence[float] = 0.1
    era_count: tuple[int, int] = (1, 6)
    era_length: tuple[int, int] = (1, 90)
    baseline_mean: float = math.log(1 / 100)
    baseline_sd: float = 0.5
    seed: int = 0
    stop_at_kept: int | None = None

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_drugs < 1:
            raise ValueError("n_subjects and n_drugs must be positive")
        prev = self.prevalence_vector()
        if np.any(prev <= 0) or np.any(prev >= 1):
            raise ValueError("prevalence must lie strictly between 0 and 1")
        lo, hi = self.era_count
        if lo < 1 or hi < lo:
            raise ValueError("era_count must be a range of positive integers")
        lo, hi = self.era_length
        if lo < 1 or hi < lo:
            raise ValueError("era lengths must be at least 1 day")
        if self.true_beta is not None and len(self.true_beta) != self.n_drugs:
            raise ValueError("true_beta must have one entry per drug")
        if self.baseline_sd < 0:
            raise ValueError("baseline_sd must be non-negative")

    def prevalence_vector(self) -> np.ndarray:
        prev = np.asarray(self.prevalence, dtype=np.float64)
        if prev.ndim == 0:
            return np.full(self.n_drugs, float(prev))
        if prev.shape != (self.n_drugs,):
            raise ValueError("prevalence must be a scalar or have one entry per drug")
        return prev

    def beta_vector(self) -> np.ndarray:
        if self.true_beta is None:
            return np.zeros(self.n_drugs)
        return np.asarray(self.true_beta, dtype=np.float64)

    def drug_ids(self) -> tuple[str, ...]:
        width = len(str(self.n_drugs - 1))
        return tuple(f"D{j:0{width}d}" for j in range(self.n_drugs))


@dataclass(frozen=True)
class SimTruth:
    true_beta: np.ndarray
    phi: np.ndarray
    kept: int
    rejected: int


def subject_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for subject ``index``; unaffected by other subjects."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_records(cfg: SimConfig) -> tuple[list[SubjectRecord], SimTruth]:
    beta = cfg.beta_vector()
    prev = cfg.prevalence_vector()
    (c_lo, c_hi), (l_lo, l_hi) = cfg.era_count, cfg.era_length
    width = len(str(cfg.n_subjects - 1))
    records, phis = [], []
    rejected = 0
    for i in range(cfg.n_subjects):
        if cfg.stop_at_kept is not None and len(records) >= cfg.stop_at_kept:
            break
        rng = subject_rng(cfg.seed, i)
        n_eras = int(rng.integers(c_lo, c_hi + 1))
        lengths = rng.integers(l_lo, l_hi + 1, size=n_eras)
        exposed = rng.random((n_eras, cfg.n_drugs)) < prev
        phi = float(rng.normal(cfg.baseline_mean, cfg.baseline_sd))
        mean = lengths * np.exp(phi + exposed @ beta)
        events = rng.poisson(mean)
        if events.sum() == 0:
            rejected += 1
            continue
        eras = tuple(
            Era(int(lengths[k]), int(events[k]), tuple(int(d) for d in np.flatnonzero(exposed[k])))
            for k in range(n_eras)
        )
        records.append(SubjectRecord(f"S{i:0{width}d}", eras))
        phis.append(phi)
    if not records:
        raise DatasetError(
            "simulation kept no subjects (no events drawn); raise baseline_mean or era lengths")
    truth = SimTruth(beta.copy(), np.asarray(phis), len(records), rejected)
    return records, truth


def simulate(cfg: SimConfig) -> tuple[Dataset, SimTruth]:
    """Draw a cases-only dataset and its generating truth; deterministic per seed."""
    records, truth = simulate_records(cfg)
    return build_dataset(records, cfg.n_drugs, cfg.drug_ids()), truth


def write_simulation(cfg: SimConfig, eras_path: str | PathLike, truth_path: str | PathLike,
                     drugs_path: str | PathLike | None = None) -> SimTruth:
    """Write the long-format era file, the ``drug_id  true_beta`` sidecar and a drug dictionary."""
    records, truth = simulate_records(cfg)
    ids = cfg.drug_ids()
    write_long_format(eras_path, records, ids)
    with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("drug_id\ttrue_beta\n")
        for label, b in zip(ids, truth.true_beta):
            fh.write(f"{label}\t{float(b)!r}\n")
    if drugs_path is not None:
        with open(drugs_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(label + "\n" for label in ids))
    return truth
