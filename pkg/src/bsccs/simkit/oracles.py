"""Brute-force reference computations used to check the engine and solver.

Nothing here shares code with :mod:`bsccs.engine` or :mod:`bsccs.solver`:
the log-likelihood is a plain loop over subjects and eras reading the
row-major exposure lists, derivatives are finite differences, and the
reference optimizer is a derivative-free golden-section coordinate ascent.
"""

from __future__ import annotations

import math

import numpy as np

from ..data import Dataset
from ..priors import PriorSpec

_INV_PHI = (math.sqrt(5) - 1) / 2


class _Rows:
    """Plain-list view of a dataset, one tuple of exposures per era."""

    def __init__(self, ds: Dataset):
        rp, rd = ds.row_ptr.tolist(), ds.row_drugs.tolist()
        self.offsets = ds.subject_offsets.tolist()
        self.Y = ds.Y.tolist()
        self.L = ds.L.tolist()
        self.exposures = [tuple(rd[rp[k]:rp[k + 1]]) for k in range(ds.K)]

    def log_likelihood(self, beta) -> float:
        Y, L, ex, off = self.Y, self.L, self.exposures, self.offsets
        total = 0.0
        for i in range(len(off) - 1):
            fit = 0.0
            norm = 0.0
            n_i = 0
            for k in range(off[i], off[i + 1]):
                eta = 0.0
                for d in ex[k]:
                    eta += beta[d]
                fit += Y[k] * eta
                norm += L[k] * math.exp(eta)
                n_i += Y[k]
            total += fit - n_i * math.log(norm)
        return total


def oracle_log_likelihood(ds: Dataset, beta) -> float:
    """Conditioned-Poisson log-likelihood by direct summation over subjects and eras."""
    return _Rows(ds).log_likelihood([float(b) for b in beta])


def oracle_gradient(ds: Dataset, beta, j: int, step: float = 1e-5) -> float:
    """Central difference of :func:`oracle_log_likelihood` along coordinate ``j``."""
    if not step > 0:
        raise ValueError("step must be positive")
    rows = _Rows(ds)
    up = [float(b) for b in beta]
    down = list(up)
    up[j] += step
    down[j] -= step
    return (rows.log_likelihood(up) - rows.log_likelihood(down)) / (2 * step)


def oracle_curvature(ds: Dataset, beta, j: int, step: float = 1e-4) -> float:
    """Second central difference of :func:`oracle_log_likelihood` along coordinate ``j``."""
    if not step > 0:
        raise ValueError("step must be positive")
    rows = _Rows(ds)
    mid = [float(b) for b in beta]
    up, down = list(mid), list(mid)
    up[j] += step
    down[j] -= step
    f0 = rows.log_likelihood(mid)
    return (rows.log_likelihood(up) - 2 * f0 + rows.log_likelihood(down)) / step**2


def _prior_term(prior: PriorSpec, t: float) -> float:
    if prior.kind == "normal":
        return -t * t / (2 * prior.variance)
    if prior.kind == "laplace":
        return -abs(t) / prior.laplace_scale
    return 0.0


def _maximize_1d(f, x0: float, tol: float, limit: float) -> float:
    """Maximize a unimodal function: walk uphill from ``x0`` to bracket, then golden-section."""
    step = 0.1
    f0 = f(x0)
    direction = 1.0
    if f(x0 + step) < f0:
        if f(x0 - step) <= f0:
            a, c = x0 - step, x0 + step
            direction = 0.0
        else:
            direction = -1.0
    if direction:
        prev, cur, f_cur = x0, x0, f0
        while True:
            nxt = min(max(cur + direction * step, -limit), limit)
            f_nxt = f(nxt)
            if f_nxt < f_cur or abs(nxt) >= limit:
                break
            prev, cur, f_cur = cur, nxt, f_nxt
            step /= _INV_PHI
        a, c = min(prev, nxt), max(prev, nxt)
    x1 = c - _INV_PHI * (c - a)
    x2 = a + _INV_PHI * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > tol:
        if f1 >= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _INV_PHI * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (c - a)
            f2 = f(x2)
    return x1 if f1 >= f2 else x2


def reference_fit(ds: Dataset, prior: PriorSpec, tol: float = 1e-7,
                  max_sweeps: int = 2000) -> np.ndarray:
    """Exact cyclic coordinate ascent on the penalized brute-force log-likelihood.

    Restricted to small problems (N <= 200, J <= 10). With a Laplace prior a
    coordinate is set to exactly zero whenever zero scores at least as well
    as the line-search optimum.
    """
    if ds.N > 200 or ds.J > 10:
        raise ValueError("reference_fit is limited to N <= 200 and J <= 10")
    rows = _Rows(ds)
    beta = [0.0] * ds.J
    for _ in range(max_sweeps):
        moved = 0.0
        for j in range(ds.J):
            def objective(t, j=j):
                trial = list(beta)
                trial[j] = t
                return rows.log_likelihood(trial) + _prior_term(prior, t)

            t_best = _maximize_1d(objective, beta[j], tol * 1e-2, limit=50.0)
            if prior.kind == "laplace" and objective(0.0) >= objective(t_best):
                t_best = 0.0
            moved = max(moved, abs(t_best - beta[j]))
            beta[j] = t_best
        if moved < tol:
            break
    return np.asarray(beta)
