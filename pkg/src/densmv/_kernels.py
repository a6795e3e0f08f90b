"""Numba kernels for Gaussian sums over particle clouds.

All parallel loops run over *targets* and accumulate over sources in a fixed
order, so results do not depend on the number of threads.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

with warnings.catch_warnings():
    warnings.filterwarnings("ignore", message=".*TBB.*")
    import numba as nb

# TBB in this image is too old; the workqueue layer is deterministic and always present
nb.config.THREADING_LAYER = "workqueue"

# Cramer's constant: |H_n(x)| exp(-x^2/2) <= K 2^(n/2) sqrt(n!)
CRAMER_K = 1.0864353

FGT_ORDER = 16
FGT_BOX_RATIO = 0.5  # box width in units of sqrt(4 dt)


def set_threads(workers: int) -> int:
    """Clamp and apply the numba thread count; returns the count in effect."""
    workers = max(1, min(int(workers), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(workers)
    return workers


@nb.njit(cache=True)
def _hermite_coeffs(src, w, lo, width, nbox, h, order):
    A = np.zeros((nbox, order))
    for i in range(src.size):
        b = int((src[i] - lo) / width)
        if b >= nbox:
            b = nbox - 1
        u = (src[i] - (lo + (b + 0.5) * width)) / h
        term = w[i]
        for k in range(order):
            A[b, k] += term
            term = term * u / (k + 1)
    return A


@nb.njit(cache=True)
def _hermite_functions(x, kmax):
    """h_k(x) = exp(-x^2) H_k(x) for k < kmax."""
    out = np.empty(kmax)
    out[0] = math.exp(-x * x)
    if kmax > 1:
        out[1] = 2.0 * x * out[0]
    for k in range(1, kmax - 1):
        out[k + 1] = 2.0 * x * out[k] - 2.0 * k * out[k - 1]
    return out


@nb.njit(cache=True)
def _hermite_to_taylor(A, K, ratio, order):
    nbox = A.shape[0]
    H = np.empty((2 * K + 1, 2 * order))
    for o in range(-K, K + 1):
        H[o + K] = _hermite_functions(o * ratio, 2 * order)
    fact = np.empty(order)
    fact[0] = 1.0
    for m in range(1, order):
        fact[m] = fact[m - 1] * m
    B = np.zeros((nbox, order))
    for c in range(nbox):
        for o in range(-K, K + 1):
            b = c - o
            if b < 0 or b >= nbox:
                continue
            for n in range(order):
                a = A[b, n]
                if a == 0.0:
                    continue
                for m in range(order):
                    B[c, m] += a * H[o + K, n + m]
        for m in range(order):
            B[c, m] *= (-1.0) ** m / fact[m]
    return B


@nb.njit(cache=True, parallel=True)
def _taylor_eval(tgt, B, lo, width, h):
    nbox, order = B.shape
    out = np.empty(tgt.size)
    for j in nb.prange(tgt.size):
        c = int((tgt[j] - lo) / width)
        if c >= nbox:
            c = nbox - 1
        v = (tgt[j] - (lo + (c + 0.5) * width)) / h
        acc = 0.0
        for m in range(order - 1, -1, -1):
            acc = acc * v + B[c, m]
        out[j] = acc
    return out


@nb.njit(cache=True, parallel=True)
def _skipped_weight(tgt, box_weight, lo, width, K):
    nbox = box_weight.size
    cum = np.zeros(nbox + 1)
    for b in range(nbox):
        cum[b + 1] = cum[b] + box_weight[b]
    out = np.empty(tgt.size)
    for j in nb.prange(tgt.size):
        c = int((tgt[j] - lo) / width)
        if c >= nbox:
            c = nbox - 1
        a = max(c - K, 0)
        b = min(c + K + 1, nbox)
        out[j] = cum[nbox] - (cum[b] - cum[a])
    return out


def _tail_sum(base: float, start: int, terms: int = 60) -> float:
    return sum(base**n / math.sqrt(math.factorial(n)) for n in range(start, start + terms))


def fgt_1d(centers, weights, targets, dt, radius_mult=8.0):
    """Gaussian sum sum_i w_i p_dt(t - c_i) in 1D via a Hermite/Taylor transform.

    Returns ``(values, bound)`` where ``bound`` is a per-target a priori bound on
    the absolute error (series truncation plus skipped far boxes).
    """
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    h = math.sqrt(4.0 * dt)
    width = FGT_BOX_RATIO * h
    lo = min(centers.min(), targets.min())
    hi = max(centers.max(), targets.max())
    nbox = int((hi - lo) / width) + 1
    sigma = math.sqrt(2.0 * dt)
    K = int(math.ceil(radius_mult * sigma / width))
    norm = 1.0 / math.sqrt(4.0 * math.pi * dt)

    A = _hermite_coeffs(centers, weights, lo, width, nbox, h, FGT_ORDER)
    B = _hermite_to_taylor(A, K, FGT_BOX_RATIO, FGT_ORDER)
    values = _taylor_eval(targets, B, lo, width, h) * norm

    base = 2.0 * (FGT_BOX_RATIO / 2.0)
    trunc = 2.0 * CRAMER_K * _tail_sum(base, FGT_ORDER) * _tail_sum(base, 0) * np.abs(weights).sum()
    skipped = _skipped_weight(targets, np.abs(A[:, 0]), lo, width, K)
    far = math.exp(-((K * width) ** 2) / (4.0 * dt))
    bound = norm * (trunc + skipped * far)
    return values, bound


@nb.njit(cache=True, parallel=True)
def _direct(centers, weights, targets, dt, radius):
    M = targets.shape[0]
    N, d = centers.shape
    inv = 1.0 / (4.0 * dt)
    r2 = radius * radius
    vals = np.empty(M)
    skipped = np.empty(M)
    for j in nb.prange(M):
        acc = 0.0
        skip = 0.0
        for i in range(N):
            q = 0.0
            for a in range(d):
                diff = targets[j, a] - centers[i, a]
                q += diff * diff
            if q > r2:
                skip += abs(weights[i])
            else:
                acc += weights[i] * math.exp(-q * inv)
        vals[j] = acc
        skipped[j] = skip
    return vals, skipped


def direct_sum(centers, weights, targets, dt, radius=math.inf):
    """Direct O(N M) Gaussian sum in any dimension, optionally truncated.

    ``centers`` and ``targets`` have shape (N, d) and (M, d). Sources farther
    than ``radius`` from a target are skipped; the returned bound covers them.
    """
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    d = centers.shape[1]
    norm = (4.0 * math.pi * dt) ** (-d / 2.0)
    vals, skipped = _direct(centers, weights, targets, dt, float(radius))
    far = math.exp(-(radius**2) / (4.0 * dt)) if math.isfinite(radius) else 0.0
    return vals * norm, skipped * norm * far


@nb.njit(cache=True, parallel=True)
def _direct_moments(centers, targets, dt):
    M = targets.shape[0]
    N, d = centers.shape
    inv = 1.0 / (4.0 * dt)
    s1 = np.empty(M)
    s2 = np.empty(M)
    for j in nb.prange(M):
        a1 = 0.0
        a2 = 0.0
        for i in range(N):
            q = 0.0
            for a in range(d):
                diff = targets[j, a] - centers[i, a]
                q += diff * diff
            g = math.exp(-q * inv)
            a1 += g
            a2 += g * g
        s1[j] = a1
        s2[j] = a2
    return s1, s2


def mixture_standard_error(centers, targets, dt):
    """Monte Carlo standard error of an equal-weight Gaussian mixture at targets."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    N, d = centers.shape
    norm = (4.0 * math.pi * dt) ** (-d / 2.0)
    s1, s2 = _direct_moments(centers, targets, dt)
    mean = s1 / N
    var = np.maximum(s2 / N - mean * mean, 0.0) * N / max(N - 1, 1)
    return norm * np.sqrt(var / N)


@nb.njit(cache=True, parallel=True)
def _duhamel_accumulate(pos, drift, node_step, tau, wq, wq_coarse, targets):
    """Per-target sums over particles of the time-integrated drift term.

    pos: (J, N, d) positions at quadrature nodes; drift: (S, N, d) frozen
    drifts per step with node_step[k] selecting the step of node k; tau: (J,)
    time-to-target; wq, wq_coarse: (J,) weights of the fine and the coarse
    rule (zero where a node is not used by that rule).
    """
    J, N, d = pos.shape
    M = targets.shape[0]
    s1 = np.zeros(M)
    s2 = np.zeros(M)
    sc = np.zeros(M)
    norms = np.empty(J)
    for k in range(J):
        norms[k] = (4.0 * math.pi * tau[k]) ** (-d / 2.0)
    for m in nb.prange(M):
        a1 = 0.0
        a2 = 0.0
        ac = 0.0
        for i in range(N):
            g = 0.0
            gc = 0.0
            for k in range(J):
                q = 0.0
                dot = 0.0
                for a in range(d):
                    diff = pos[k, i, a] - targets[m, a]
                    q += diff * diff
                    dot += drift[node_step[k], i, a] * diff
                if dot == 0.0 or q > 200.0 * tau[k]:
                    continue
                val = -dot / (2.0 * tau[k]) * norms[k] * math.exp(-q / (4.0 * tau[k]))
                g += wq[k] * val
                gc += wq_coarse[k] * val
            a1 += g
            a2 += g * g
            ac += gc
        s1[m] = a1
        s2[m] = a2
        sc[m] = ac
    return s1, s2, sc
