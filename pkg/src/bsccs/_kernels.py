"""Compiled loops behind :mod:`bsccs.engine`.

Every kernel is generic over the floating dtype of the state arrays, so the
same code serves single and double precision; accumulators take the dtype
of the arrays they read. Coordinate pairs of a column are sorted by subject
(and by row within a subject), which is what lets a reduction walk runs of
equal subjects without a scratch vector and lets the parallel variants split
work at subject boundaries with no write conflicts.
"""

import numpy as np
from numba import njit, prange

_opts = dict(nogil=True, cache=True)


@njit(**_opts)
def xbeta_from_columns(col_ptr, col_rows, beta, out):
    out[:] = 0
    for j in range(beta.shape[0]):
        b = beta[j]
        if b != 0.0:
            for p in range(col_ptr[j], col_ptr[j + 1]):
                out[col_rows[p]] += b


@njit(**_opts)
def refresh_exp(L, xbeta, lexp):
    for k in range(xbeta.shape[0]):
        lexp[k] = L[k] * np.exp(xbeta[k])


@njit(**_opts)
def segment_sums(offsets, values, out):
    for i in range(out.shape[0]):
        a = offsets[i]
        acc = values[a]
        for k in range(a + 1, offsets[i + 1]):
            acc += values[k]
        out[i] = acc


@njit(**_opts)
def shifted_max_abs(col_rows, lo, hi, xbeta, delta):
    m = 0.0
    for p in range(lo, hi):
        v = abs(xbeta[col_rows[p]] + delta)
        if v > m:
            m = v
    return m


@njit(**_opts)
def apply_update(col_rows, col_subjects, lo, hi, L, xbeta, lexp, denom, delta):
    for p in range(lo, hi):
        k = col_rows[p]
        xbeta[k] = xbeta[k] + delta
        old = lexp[k]
        lexp[k] = L[k] * np.exp(xbeta[k])
        s = col_subjects[p]
        denom[s] = denom[s] + (lexp[k] - old)


@njit(**_opts)
def add_to_rows(col_rows, lo, hi, xbeta, delta):
    for p in range(lo, hi):
        xbeta[col_rows[p]] = xbeta[col_rows[p]] + delta


@njit(**_opts)
def fused_sparse(col_rows, col_subjects, lo, hi, offsets, lexp, denom, n):
    """Return (sum n*w, sum n*w*(1-w)) over subjects touched by the pair slice.

    A subject whose every era lies in the column has w = 1 exactly. A
    non-positive denominator yields NaN so the caller can report it.
    """
    out = np.zeros(2, dtype=denom.dtype)
    p = lo
    while p < hi:
        s = col_subjects[p]
        num = lexp[col_rows[p]]
        cnt = 1
        p += 1
        while p < hi and col_subjects[p] == s:
            num += lexp[col_rows[p]]
            cnt += 1
            p += 1
        d = denom[s]
        if d <= 0:
            out[0] = np.nan
            return out[0], out[1]
        if cnt == offsets[s + 1] - offsets[s]:
            out[0] += n[s]
        else:
            w = num / d
            if w > 1:
                w = 1
            t = n[s] * w
            out[0] += t
            out[1] += t * (1 - w)
    return out[0], out[1]


@njit(**_opts)
def fused_dense(col_rows, col_subjects, lo, hi, offsets, lexp, denom, n, num, cnt):
    """Same reduction as :func:`fused_sparse` but sweeping all N subjects."""
    out = np.zeros(2, dtype=denom.dtype)
    num[:] = 0
    cnt[:] = 0
    for p in range(lo, hi):
        s = col_subjects[p]
        num[s] += lexp[col_rows[p]]
        cnt[s] += 1
    for s in range(n.shape[0]):
        d = denom[s]
        if d <= 0:
            out[0] = np.nan
            return out[0], out[1]
        if cnt[s] == offsets[s + 1] - offsets[s]:
            out[0] += n[s]
        else:
            w = num[s] / d
            if w > 1:
                w = 1
            t = n[s] * w
            out[0] += t
            out[1] += t * (1 - w)
    return out[0], out[1]


@njit(**_opts)
def _partition_bounds(col_subjects, lo, hi, n_subjects, partitions):
    # pair-slice boundaries of contiguous subject ranges [N*p/P, N*(p+1)/P)
    bounds = np.empty(partitions + 1, dtype=np.int64)
    seg = col_subjects[lo:hi]
    for p in range(partitions + 1):
        cut = (n_subjects * p) // partitions
        bounds[p] = lo + np.searchsorted(seg, cut)
    return bounds


@njit(parallel=True, **_opts)
def fused_sparse_partitioned(col_rows, col_subjects, lo, hi, offsets, lexp, denom, n, partitions):
    bounds = _partition_bounds(col_subjects, lo, hi, n.shape[0], partitions)
    partial = np.zeros((partitions, 2), dtype=denom.dtype)
    for p in prange(partitions):
        a, b = fused_sparse(col_rows, col_subjects, bounds[p], bounds[p + 1],
                            offsets, lexp, denom, n)
        partial[p, 0] = a
        partial[p, 1] = b
    s1 = 0.0
    s2 = 0.0
    for p in range(partitions):
        s1 += partial[p, 0]
        s2 += partial[p, 1]
    return s1, s2


@njit(parallel=True, **_opts)
def apply_update_partitioned(col_rows, col_subjects, lo, hi, L, xbeta, lexp, denom, delta,
                             partitions):
    bounds = _partition_bounds(col_subjects, lo, hi, denom.shape[0], partitions)
    for p in prange(partitions):
        apply_update(col_rows, col_subjects, bounds[p], bounds[p + 1], L, xbeta, lexp, denom,
                     delta)
