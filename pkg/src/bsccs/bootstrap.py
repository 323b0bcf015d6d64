"""Nonparametric bootstrap over subjects: percentile intervals and nonzero proportions."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import Dataset, subset_dataset
from .errors import BootstrapError, BSCCSError, DatasetError
from .priors import PriorSpec
from .solver import FitResult, SolverConfig, fit

logger = logging.getLogger(__name__)

REPORT_HEADER = ("drug_id", "beta_map", "ci_lower", "ci_upper", "p_hat")


@dataclass(frozen=True)
class BootstrapConfig:
    prior: PriorSpec
    replicates: int = 200
    level: float = 0.95
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    warm_start: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie strictly between 0 and 1")
        if self.threads < 1:
            raise ValueError("threads must be positive")


@dataclass(frozen=True)
class BootstrapResult:
    drug_ids: tuple[str, ...]
    beta_map: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    p_hat: np.ndarray
    replicate_betas: np.ndarray   # converged replicates only, (B_ok, J)
    n_failed: int
    full_fit: FitResult | None = None


class ReportRow(NamedTuple):
    drug_id: str
    beta_map: float
    lower: float
    upper: float
    p_hat: float


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))


def resample(ds: Dataset, rng: np.random.Generator) -> np.ndarray:
    """N subject indices drawn uniformly with replacement."""
    return rng.integers(0, ds.N, size=ds.N)


def _replicate(ds: Dataset, cfg: BootstrapConfig, b: int, init_beta) -> np.ndarray | None:
    sample = subset_dataset(ds, resample(ds, replicate_rng(cfg.seed, b)))
    try:
        res = fit(sample, cfg.prior, cfg.solver, init_beta=init_beta)
    except BSCCSError as exc:
        logger.warning("bootstrap replicate %d failed: %s", b, exc)
        return None
    return res.beta_map if res.converged else None


def run_bootstrap(ds: Dataset, cfg: BootstrapConfig) -> BootstrapResult:
    """Refit on ``cfg.replicates`` resamples with the prior held fixed.

    Interval bounds are linearly interpolated empirical quantiles of the
    replicate estimates; ``p_hat`` is the fraction of replicates with a
    nonzero estimate. Non-converged replicates are left out of both and
    counted in ``n_failed``.
    """
    if ds.N == 0:
        raise DatasetError("cannot bootstrap an empty dataset")
    full = fit(ds, cfg.prior, cfg.solver)
    init = full.beta_map if cfg.warm_start else None
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        betas = list(pool.map(lambda b: _replicate(ds, cfg, b, init), range(cfg.replicates)))
    kept = [b for b in betas if b is not None]
    n_failed = len(betas) - len(kept)
    if not kept:
        raise BootstrapError(f"none of the {cfg.replicates} bootstrap replicates converged")
    reps = np.vstack(kept)
    alpha = 1.0 - cfg.level
    lower, upper = np.quantile(reps, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")
    p_hat = np.count_nonzero(reps, axis=0) / reps.shape[0]
    return BootstrapResult(ds.drug_ids, full.beta_map, lower, upper, p_hat, reps, n_failed, full)


def report_ranked_intervals(result: BootstrapResult, threshold: float = 0.5) -> list[ReportRow]:
    """Drugs with ``p_hat > threshold``, largest full-data estimate first.

    A drug that is nonzero in every replicate is always reported, so
    ``threshold=1`` lists exactly those drugs.
    """
    rows = [
        ReportRow(label, float(b), float(lo), float(hi), float(p))
        for label, b, lo, hi, p in zip(result.drug_ids, result.beta_map, result.lower,
                                       result.upper, result.p_hat)
        if p > threshold or p >= 1.0
    ]
    rows.sort(key=lambda r: (-r.beta_map, r.drug_id))
    return rows


def format_report(rows: list[ReportRow]) -> str:
    lines = ["\t".join(REPORT_HEADER)]
    for r in rows:
        lines.append(f"{r.drug_id}\t{r.beta_map!r}\t{r.lower!r}\t{r.upper!r}\t{r.p_hat!r}")
    return "\n".join(lines) + "\n"
