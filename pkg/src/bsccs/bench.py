"""Timing harness comparing the dense, sparse and partitioned update paths."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import engine
from .data import Dataset
from .priors import PriorSpec
from .solver import FitResult, SolverConfig, fit

BENCH_HEADER = ("path", "partitions", "seconds", "speedup_vs_dense", "cycles", "converged")
AGREEMENT_TOL = 1e-8


@dataclass(frozen=True)
class PathTiming:
    path: str
    partitions: int
    seconds: float
    result: FitResult


@dataclass(frozen=True)
class BenchResult:
    timings: tuple[PathTiming, ...]
    max_disagreement: float

    @property
    def agree(self) -> bool:
        return self.max_disagreement <= AGREEMENT_TOL

    def seconds(self, path: str) -> float:
        return next(t.seconds for t in self.timings if t.path == path)

    def speedup(self, path: str) -> float:
        return self.seconds("dense") / self.seconds(path)


def _warm_up(ds: Dataset, prior: PriorSpec, cfg: SolverConfig, partitions: int) -> None:
    # trigger numba compilation for every kernel outside the timed region
    for c in (cfg.with_(path="dense", max_cycles=1), cfg.with_(max_cycles=1),
              cfg.with_(partitions=partitions, max_cycles=1)):
        fit(ds, prior, c)


def _timed(ds, prior, cfg, repeats):
    best, res = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = fit(ds, prior, cfg)
        best = min(best, time.perf_counter() - t0)
    return best, res


def run_bench(ds: Dataset, prior: PriorSpec, cfg: SolverConfig | None = None,
              partitions: int = 4, repeats: int = 1) -> BenchResult:
    """Fit the same problem on all three paths; keep the best of ``repeats`` wall times."""
    cfg = (cfg or SolverConfig()).with_(path="sparse", partitions=1)
    if partitions < 1:
        raise ValueError("partitions must be a positive integer")
    engine.set_threads(partitions)
    _warm_up(ds, prior, cfg, partitions)
    runs = [
        ("dense", 1, cfg.with_(path="dense")),
        ("sparse", 1, cfg),
        ("parallel", partitions, cfg.with_(partitions=partitions)),
    ]
    timings = []
    for name, parts, c in runs:
        secs, res = _timed(ds, prior, c, repeats)
        timings.append(PathTiming(name, parts, secs, res))
    ref = timings[1].result.beta_map
    gap = max(float(np.max(np.abs(t.result.beta_map - ref), initial=0.0)) for t in timings)
    return BenchResult(tuple(timings), gap)


def format_bench(result: BenchResult) -> str:
    lines = ["\t".join(BENCH_HEADER)]
    dense = result.seconds("dense")
    for t in result.timings:
        lines.append(f"{t.path}\t{t.partitions}\t{t.seconds:.6f}\t{dense / t.seconds:.3f}\t"
                     f"{t.result.cycles_run}\t{int(t.result.converged)}")
    return "\n".join(lines) + "\n"
