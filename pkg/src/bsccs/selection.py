"""Choice of the prior variance by k-fold cross-validated predictive log-likelihood."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .data import Dataset, subset_dataset
from .errors import BSCCSError, DatasetError, SelectionError
from .priors import PriorSpec
from .solver import SolverConfig, fit

logger = logging.getLogger(__name__)


def default_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(-3, 1, 13))


@dataclass(frozen=True)
class CVConfig:
    k: int = 10
    grid: tuple[float, ...] = field(default_factory=default_grid)
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    prior_kind: str = "laplace"
    warm_start: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.grid:
            raise ValueError("grid must not be empty")
        if any(v <= 0 for v in self.grid):
            raise ValueError("grid values must be positive")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly ascending")
        if self.prior_kind not in ("normal", "laplace"):
            raise ValueError("prior_kind must be 'normal' or 'laplace'")
        if self.threads < 1:
            raise ValueError("threads must be positive")


@dataclass(frozen=True)
class CVResult:
    grid: np.ndarray
    fold_values: np.ndarray      # (grid point, fold); NaN where the fit failed
    converged: np.ndarray        # (grid point, fold)
    cycles: np.ndarray           # (grid point, fold)
    selected_variance: float
    folds: tuple[np.ndarray, ...] = ()

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.fold_values), axis=1)

    @property
    def mean_values(self) -> np.ndarray:
        return self.fold_values.mean(axis=1)

    @property
    def total_cycles(self) -> int:
        return int(self.cycles.sum())

    @property
    def selected_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.selected_variance)[0])


def kfold_split(ds: Dataset, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle subjects with a seeded RNG and deal them round-robin into ``k`` folds."""
    if k < 1:
        raise ValueError("k must be positive")
    if k > ds.N:
        raise DatasetError(f"cannot split {ds.N} subjects into {k} folds")
    perm = np.random.default_rng(seed).permutation(ds.N)
    return [perm[f::k] for f in range(k)]


def predictive_log_likelihood(train_beta, heldout: Dataset, precision: str = "double") -> float:
    """Log-likelihood of the held-out subjects at the training coefficients."""
    state = engine.init_state(heldout, train_beta, precision)
    return engine.log_likelihood(heldout, state)


def _run_fold(ds: Dataset, folds: list[np.ndarray], f: int, cfg: CVConfig):
    train_idx = np.sort(np.concatenate([folds[g] for g in range(len(folds)) if g != f]))
    train = subset_dataset(ds, train_idx)
    heldout = subset_dataset(ds, np.sort(folds[f]))
    G = len(cfg.grid)
    values = np.full(G, np.nan)
    converged = np.zeros(G, dtype=bool)
    cycles = np.zeros(G, dtype=np.int64)
    beta = None
    for g, variance in enumerate(cfg.grid):
        try:
            res = fit(train, PriorSpec(cfg.prior_kind, variance), cfg.solver,
                      init_beta=beta if cfg.warm_start else None)
            values[g] = predictive_log_likelihood(res.beta_map, heldout, cfg.solver.precision)
        except BSCCSError as exc:
            logger.warning("fold %d, variance %g: fit failed (%s)", f, variance, exc)
            beta = None
            continue
        converged[g] = res.converged
        cycles[g] = res.cycles_run
        beta = res.beta_map
    return values, converged, cycles


def grid_search_cv(ds: Dataset, cfg: CVConfig | None = None) -> CVResult:
    """Cross-validate the prior variance over an ascending grid.

    Within a fold the grid is walked from the smallest variance up, each fit
    starting from the previous one's estimate. The selected variance maximizes
    the mean held-out log-likelihood over grid points valid in every fold;
    ties go to the smaller variance.
    """
    cfg = cfg or CVConfig()
    folds = kfold_split(ds, cfg.k, cfg.seed)
    with ThreadPoolExecutor(max_workers=min(cfg.threads, cfg.k)) as pool:
        parts = list(pool.map(lambda f: _run_fold(ds, folds, f, cfg), range(cfg.k)))
    values = np.stack([p[0] for p in parts], axis=1)
    converged = np.stack([p[1] for p in parts], axis=1)
    cycles = np.stack([p[2] for p in parts], axis=1)
    grid = np.asarray(cfg.grid)
    valid = np.all(np.isfinite(values), axis=1)
    if not valid.any():
        raise SelectionError("every grid point failed in at least one fold")
    means = np.where(valid, values.mean(axis=1), -np.inf)
    # argmax returns the first (smallest-variance) maximizer
    selected = float(grid[int(np.argmax(means))])
    return CVResult(grid, values, converged, cycles, selected, tuple(folds))
