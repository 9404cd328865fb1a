"""Hot kernels of the blind sequence search, in two interchangeable flavors.

The numba build is used when available; setting the environment variable
``FSOLINK_NO_NUMBA=1`` (before import) forces the pure-numpy fallback.  Both
flavors are importable side by side for the benchmark in ``benchmarks/``.

Shapes: ``r`` is (L, N) and ``r3`` is (F, L, N) with N the flattened detector
count.  ``ranking`` selects the slot statistic of the reduced search:
0 sums the array output per slot, 1 takes the per-slot maximum.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("FSOLINK_NO_NUMBA", "0").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by FSOLINK_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

RANK_SUM = 0
RANK_MAX = 1


# ---------------------------------------------------------------------------
# scalar-loop implementations (numba-compiled when available)
# ---------------------------------------------------------------------------

def _channel_estimates(A, B, m, mu_e, s2, s0, out):
    """Closed-form per-detector coefficient estimates given the on-slot sums
    A = sum r, B = sum r^2 over m selected slots.  Clamped at zero."""
    n_det = A.shape[0]
    if s2 > 0.0:
        t1 = s2 / (2.0 * mu_e * mu_e)
        t2 = s0 / s2
        for n in range(n_det):
            R = (2.0 * mu_e * s0 * A[n] + s2 * B[n]) / (m * mu_e * mu_e * s2)
            rad = t1 * t1 + t2 * t2 + R
            if rad < 0.0:
                rad = 0.0
            h = -t1 - t2 + np.sqrt(rad)
            out[n] = h if h > 0.0 else 0.0
    else:
        for n in range(n_det):
            h = A[n] / (m * mu_e)
            out[n] = h if h > 0.0 else 0.0
    return out


def _metric_from_sums(A, B, T2, m, L, mu_e, s2, s0, h_buf):
    """Search metric (twice the negative log-likelihood, constants dropped)
    of the candidate whose on-slot sums are A, B; T2 holds the per-detector
    totals of r^2 over all L slots."""
    n_det = A.shape[0]
    _channel_estimates(A, B, m, mu_e, s2, s0, h_buf)
    log_s0 = np.log(s0)
    total = n_det * (L - m) * log_s0
    for n in range(n_det):
        h = h_buf[n]
        v = s2 * h + s0
        total += (T2[n] - B[n]) / s0
        total += m * np.log(v)
        total += (B[n] - 2.0 * mu_e * h * A[n] + m * mu_e * mu_e * h * h) / v
    return total


def _exhaustive_frame(r, r2, mu_e, s2, s0, A, B, T2, h_buf):
    """Best nonzero bit pattern by full search, visiting candidates in Gray
    order so the on-slot sums update in O(N) per candidate."""
    L, n_det = r.shape
    for n in range(n_det):
        A[n] = 0.0
        B[n] = 0.0
    mask = 0
    m = 0
    best_metric = np.inf
    best_mask = 0
    n_cand = 1 << L
    for c in range(1, n_cand):
        cc = c
        flip = 0
        while cc & 1 == 0:
            cc >>= 1
            flip += 1
        bit = 1 << flip
        mask ^= bit
        if mask & bit:
            m += 1
            for n in range(n_det):
                A[n] += r[flip, n]
                B[n] += r2[flip, n]
        else:
            m -= 1
            for n in range(n_det):
                A[n] -= r[flip, n]
                B[n] -= r2[flip, n]
        metric = _metric_from_sums(A, B, T2, m, L, mu_e, s2, s0, h_buf)
        if metric < best_metric:
            best_metric = metric
            best_mask = mask
    return best_mask, best_metric


def _exhaustive_batch(r3, mu_e, s2, s0, bits_out, metrics_out):
    F, L, n_det = r3.shape
    A = np.empty(n_det)
    B = np.empty(n_det)
    T2 = np.empty(n_det)
    h_buf = np.empty(n_det)
    r2 = np.empty((L, n_det))
    for f in range(F):
        r = r3[f]
        for k in range(L):
            for n in range(n_det):
                r2[k, n] = r[k, n] * r[k, n]
        for n in range(n_det):
            t = 0.0
            for k in range(L):
                t += r2[k, n]
            T2[n] = t
        best_mask, best_metric = _exhaustive_frame(r, r2, mu_e, s2, s0,
                                                   A, B, T2, h_buf)
        for k in range(L):
            bits_out[f, k] = (best_mask >> k) & 1
        metrics_out[f] = best_metric
    return bits_out


def _reduced_frame(r, r2, order, mu_e, s2, s0, A, B, T2, h_buf):
    """Best of the L nested candidates that mark the top-m ranked slots as
    ones; on-slot sums grow incrementally along the ranking."""
    L, n_det = r.shape
    for n in range(n_det):
        A[n] = 0.0
        B[n] = 0.0
    best_metric = np.inf
    best_m = 1
    for m in range(1, L + 1):
        k = order[m - 1]
        for n in range(n_det):
            A[n] += r[k, n]
            B[n] += r2[k, n]
        metric = _metric_from_sums(A, B, T2, m, L, mu_e, s2, s0, h_buf)
        if metric < best_metric:
            best_metric = metric
            best_m = m
    return best_m, best_metric


def _reduced_batch(r3, ranking, mu_e, s2, s0, bits_out, metrics_out):
    F, L, n_det = r3.shape
    A = np.empty(n_det)
    B = np.empty(n_det)
    T2 = np.empty(n_det)
    h_buf = np.empty(n_det)
    r2 = np.empty((L, n_det))
    totals = np.empty(L)
    for f in range(F):
        r = r3[f]
        for k in range(L):
            for n in range(n_det):
                r2[k, n] = r[k, n] * r[k, n]
        for n in range(n_det):
            t = 0.0
            for k in range(L):
                t += r2[k, n]
            T2[n] = t
        for k in range(L):
            if ranking == RANK_MAX:
                t = r[k, 0]
                for n in range(1, n_det):
                    if r[k, n] > t:
                        t = r[k, n]
            else:
                t = 0.0
                for n in range(n_det):
                    t += r[k, n]
            totals[k] = t
        order = np.argsort(-totals)
        best_m, best_metric = _reduced_frame(r, r2, order, mu_e, s2, s0,
                                             A, B, T2, h_buf)
        for k in range(L):
            bits_out[f, k] = 0
        for p in range(best_m):
            bits_out[f, order[p]] = 1
        metrics_out[f] = best_metric
    return bits_out


# ---------------------------------------------------------------------------
# vectorized numpy fallbacks
# ---------------------------------------------------------------------------

def _channel_estimates_np(A, B, m, mu_e, s2, s0):
    """Vectorized channel estimates; A, B, m broadcast together."""
    if s2 > 0.0:
        t1 = s2 / (2.0 * mu_e * mu_e)
        t2 = s0 / s2
        R = (2.0 * mu_e * s0 * A + s2 * B) / (m * mu_e * mu_e * s2)
        h = -t1 - t2 + np.sqrt(np.maximum(t1 * t1 + t2 * t2 + R, 0.0))
    else:
        h = A / (m * mu_e)
    return np.maximum(h, 0.0)


def _metric_from_sums_np(A, B, T2, m, L, mu_e, s2, s0):
    """Vectorized metric; detector axis is last, summed out."""
    n_det = A.shape[-1]
    h = _channel_estimates_np(A, B, m, mu_e, s2, s0)
    v = s2 * h + s0
    per_det = ((T2 - B) / s0 + m * np.log(v)
               + (B - 2.0 * mu_e * h * A + m * mu_e ** 2 * h ** 2) / v)
    return n_det * (L - m[..., 0]) * np.log(s0) + per_det.sum(axis=-1)


def exhaustive_batch_numpy(r3, mu_e, s2, s0, candidate_chunk=4096):
    """Full-search decisions for a batch of frames, chunked over candidates."""
    r3 = np.asarray(r3, dtype=float)
    F, L, n_det = r3.shape
    T2 = (r3 ** 2).sum(axis=1)  # (F, N)
    bits_out = np.empty((F, L), dtype=np.int8)
    metrics_out = np.full(F, np.inf)
    best_mask = np.zeros(F, dtype=np.int64)
    n_cand = (1 << L) - 1
    cand = np.arange(1, n_cand + 1, dtype=np.int64)
    for start in range(0, n_cand, candidate_chunk):
        ids = cand[start:start + candidate_chunk]
        masks = ((ids[:, None] >> np.arange(L)) & 1).astype(float)  # (C, L)
        m = masks.sum(axis=1)[None, :, None]  # (1, C, 1)
        A = np.einsum("cl,fln->fcn", masks, r3)
        B = np.einsum("cl,fln->fcn", masks, r3 ** 2)
        metric = _metric_from_sums_np(A, B, T2[:, None, :], m, L, mu_e, s2, s0)
        idx = metric.argmin(axis=1)
        better = metric[np.arange(F), idx] < metrics_out
        metrics_out = np.where(better, metric[np.arange(F), idx], metrics_out)
        best_mask = np.where(better, ids[idx], best_mask)
    bits_out[:] = (best_mask[:, None] >> np.arange(L)) & 1
    return bits_out, metrics_out


def reduced_batch_numpy(r3, ranking, mu_e, s2, s0):
    """Reduced-search decisions for a batch of frames, vectorized over the
    candidate count m."""
    r3 = np.asarray(r3, dtype=float)
    F, L, n_det = r3.shape
    totals = r3.max(axis=2) if ranking == RANK_MAX else r3.sum(axis=2)
    order = np.argsort(-totals, axis=1)  # (F, L)
    rs = np.take_along_axis(r3, order[:, :, None], axis=1)
    A = np.cumsum(rs, axis=1)
    B = np.cumsum(rs ** 2, axis=1)
    T2 = B[:, -1, :]
    m = np.arange(1, L + 1, dtype=float)[None, :, None]
    metric = _metric_from_sums_np(A, B, T2[:, None, :], m, L, mu_e, s2, s0)
    best_m = metric.argmin(axis=1) + 1  # (F,)
    bits_out = np.zeros((F, L), dtype=np.int8)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(L), (F, L)), axis=1)
    bits_out[ranks < best_m[:, None]] = 1
    metrics_out = metric[np.arange(F), best_m - 1]
    return bits_out, metrics_out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _channel_estimates = njit(cache=True, nogil=True)(_channel_estimates)
    _metric_from_sums = njit(cache=True, nogil=True)(_metric_from_sums)
    _exhaustive_frame = njit(cache=True, nogil=True)(_exhaustive_frame)
    _exhaustive_batch_nb = njit(cache=True, nogil=True)(_exhaustive_batch)
    _reduced_frame = njit(cache=True, nogil=True)(_reduced_frame)
    _reduced_batch_nb = njit(cache=True, nogil=True)(_reduced_batch)

    def exhaustive_batch_numba(r3, mu_e, s2, s0):
        r3 = np.ascontiguousarray(r3, dtype=np.float64)
        F, L, _ = r3.shape
        bits = np.empty((F, L), dtype=np.int8)
        metrics = np.empty(F)
        _exhaustive_batch_nb(r3, mu_e, s2, s0, bits, metrics)
        return bits, metrics

    def reduced_batch_numba(r3, ranking, mu_e, s2, s0):
        r3 = np.ascontiguousarray(r3, dtype=np.float64)
        F, L, _ = r3.shape
        bits = np.empty((F, L), dtype=np.int8)
        metrics = np.empty(F)
        _reduced_batch_nb(r3, ranking, mu_e, s2, s0, bits, metrics)
        return bits, metrics

    exhaustive_batch = exhaustive_batch_numba
    reduced_batch = reduced_batch_numba
else:
    def exhaustive_batch(r3, mu_e, s2, s0):
        return exhaustive_batch_numpy(r3, mu_e, s2, s0)

    def reduced_batch(r3, ranking, mu_e, s2, s0):
        return reduced_batch_numpy(r3, ranking, mu_e, s2, s0)
