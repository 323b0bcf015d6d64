"""Conditioned-Poisson likelihood engine.

The engine keeps the vectors the coordinate updates need (``X beta``,
``L * exp(X beta)`` and the per-subject denominators) and produces the
one-dimensional gradient and Hessian of the log-likelihood for a column.
Two update paths are provided: the sparse path touches only the nonzeros
of the changed column, the dense path re-evaluates every era and sweeps
every subject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from . import _kernels as kern
from .data import Dataset
from .errors import EngineError

DTYPES = {"double": np.float64, "single": np.float32}
# |X beta| above these bounds would overflow exp() in the state dtype
OVERFLOW_BOUND = {"double": 700.0, "single": 80.0}


class GradHess(NamedTuple):
    g: float
    h: float


@dataclass
class EngineState:
    """Mutable solver vectors for one dataset.

    ``beta`` is always float64; the row and subject vectors use the
    configured precision.
    """

    beta: np.ndarray
    xbeta: np.ndarray
    l_exp_xbeta: np.ndarray
    denominators: np.ndarray
    precision: str = "double"

    def copy(self) -> "EngineState":
        return EngineState(self.beta.copy(), self.xbeta.copy(), self.l_exp_xbeta.copy(),
                           self.denominators.copy(), self.precision)


def _dtype(precision: str):
    try:
        return DTYPES[precision]
    except KeyError:
        raise ValueError(f"precision must be 'single' or 'double', got {precision!r}") from None


def _check_overflow(state: EngineState, peak: float) -> None:
    bound = OVERFLOW_BOUND[state.precision]
    if peak > bound:
        raise EngineError(
            f"exp overflow: max |X beta| = {peak:.6g} exceeds {bound:g} ({state.precision} precision)")


def init_state(ds: Dataset, beta=None, precision: str = "double") -> EngineState:
    """Solver state for ``beta`` (zeros by default)."""
    dtype = _dtype(precision)
    if beta is None:
        beta = np.zeros(ds.J)
    beta = np.array(beta, dtype=np.float64).reshape(-1)
    if beta.shape != (ds.J,):
        raise ValueError(f"beta must have length J={ds.J}, got {beta.shape[0]}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta has non-finite entries")
    state = EngineState(beta, np.empty(ds.K, dtype), np.empty(ds.K, dtype),
                        np.empty(ds.N, dtype), precision)
    return dense_recompute(ds, state)


def dense_recompute(ds: Dataset, state: EngineState, beta=None) -> EngineState:
    """Recompute every state vector from ``beta`` (default: ``state.beta``) in O(nnz + K)."""
    if beta is not None:
        beta = np.asarray(beta, dtype=np.float64)
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta has non-finite entries")
        state.beta[:] = beta
    kern.xbeta_from_columns(ds.col_ptr, ds.col_rows, state.beta, state.xbeta)
    refresh_from_xbeta(ds, state)
    return state


def refresh_from_xbeta(ds: Dataset, state: EngineState) -> EngineState:
    """Dense O(K) re-evaluation of ``L * exp(X beta)`` and the denominators."""
    if ds.K:
        _check_overflow(state, float(np.max(np.abs(state.xbeta))))
    kern.refresh_exp(ds.L, state.xbeta, state.l_exp_xbeta)
    kern.segment_sums(ds.subject_offsets, state.l_exp_xbeta, state.denominators)
    return state


def sparse_delta_update(ds: Dataset, state: EngineState, j: int, delta: float,
                        partitions: int = 1) -> EngineState:
    """Apply ``beta_j += delta`` touching only the nonzeros of column ``j``.

    With ``partitions > 1`` the nonzeros are split at subject boundaries and
    processed concurrently; each denominator slot still sees its updates in
    row order, so the result is identical to the serial path.
    """
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    if delta == 0.0:
        return state
    lo, hi = int(ds.col_ptr[j]), int(ds.col_ptr[j + 1])
    if lo == hi:
        state.beta[j] += delta
        return state
    _check_overflow(state, kern.shifted_max_abs(ds.col_rows, lo, hi, state.xbeta, delta))
    if partitions > 1:
        kern.apply_update_partitioned(ds.col_rows, ds.col_subjects, lo, hi, ds.L, state.xbeta,
                                      state.l_exp_xbeta, state.denominators, delta, partitions)
    else:
        kern.apply_update(ds.col_rows, ds.col_subjects, lo, hi, ds.L, state.xbeta,
                          state.l_exp_xbeta, state.denominators, delta)
    state.beta[j] += delta
    return state


def dense_delta_update(ds: Dataset, state: EngineState, j: int, delta: float) -> EngineState:
    """Dense-path update: shift ``X beta`` by the column, then re-evaluate all eras."""
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    lo, hi = int(ds.col_ptr[j]), int(ds.col_ptr[j + 1])
    kern.add_to_rows(ds.col_rows, lo, hi, state.xbeta, delta)
    state.beta[j] += delta
    return refresh_from_xbeta(ds, state)


def _finish(ds: Dataset, j: int, s1: float, s2: float) -> GradHess:
    if not math.isfinite(s1):
        raise EngineError("non-positive subject denominator; engine state is inconsistent")
    return GradHess(float(ds.y_dot_x[j]) - s1, -s2)


def fused_grad_hess(ds: Dataset, state: EngineState, j: int, dense: bool = False) -> GradHess:
    """Gradient and Hessian of the log-likelihood along coordinate ``j``.

    The per-subject ratio ``w_i`` is formed and consumed on the fly; only
    subjects exposed to drug ``j`` are visited unless ``dense`` is set.
    """
    lo, hi = int(ds.col_ptr[j]), int(ds.col_ptr[j + 1])
    if dense:
        num = np.empty(ds.N, state.denominators.dtype)
        cnt = np.empty(ds.N, np.int64)
        s1, s2 = kern.fused_dense(ds.col_rows, ds.col_subjects, lo, hi, ds.subject_offsets,
                                  state.l_exp_xbeta, state.denominators, ds.n, num, cnt)
    else:
        s1, s2 = kern.fused_sparse(ds.col_rows, ds.col_subjects, lo, hi, ds.subject_offsets,
                                   state.l_exp_xbeta, state.denominators, ds.n)
    return _finish(ds, j, s1, s2)


def parallel_fused_grad_hess(ds: Dataset, state: EngineState, j: int, partitions: int) -> GradHess:
    """:func:`fused_grad_hess` with subjects split into ``partitions`` contiguous ranges.

    Range partial sums are computed concurrently and combined in range order,
    so the result depends on the partition count but not on scheduling.
    """
    if partitions < 1:
        raise ValueError("partitions must be a positive integer")
    lo, hi = int(ds.col_ptr[j]), int(ds.col_ptr[j + 1])
    s1, s2 = kern.fused_sparse_partitioned(ds.col_rows, ds.col_subjects, lo, hi,
                                           ds.subject_offsets, state.l_exp_xbeta,
                                           state.denominators, ds.n, partitions)
    return _finish(ds, j, s1, s2)


def log_likelihood(ds: Dataset, state: EngineState) -> float:
    """``Y'X beta - N' log(M [L * exp(X beta)])``."""
    fit = float(np.dot(ds.y_dot_x.astype(np.float64), state.beta))
    return fit - float(np.dot(ds.n, np.log(state.denominators.astype(np.float64))))


def set_threads(threads: int | None) -> int:
    """Cap the worker threads used by the partitioned kernels; returns the cap applied."""
    limit = numba.config.NUMBA_NUM_THREADS
    threads = limit if threads is None else max(1, min(int(threads), limit))
    numba.set_num_threads(threads)
    return threads
