"""Gaussian heat kernel p_t(x) = (4 pi t)^(-d/2) exp(-|x|^2 / 4t) and its semigroup."""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc
from scipy.stats import qmc

__all__ = [
    "KernelQuery",
    "ProbeSet",
    "SemigroupValue",
    "bound_ratios",
    "gradient_bound_sup",
    "probe_set",
    "eval_p",
    "eval_grad_p",
    "heat_kernel",
    "heat_kernel_grad",
    "log_heat_kernel",
    "semigroup_apply",
]


@dataclass(frozen=True)
class KernelQuery:
    dim: int
    time: float
    point: np.ndarray

    def __post_init__(self):
        point = np.atleast_1d(np.asarray(self.point, dtype=float))
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if not self.time > 0:
            raise ValueError(f"heat kernel needs t > 0, got {self.time}")
        if point.shape != (self.dim,):
            raise ValueError(f"point has shape {point.shape}, expected ({self.dim},)")
        object.__setattr__(self, "point", point)


def _check_time(t):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("heat kernel needs t > 0")


def log_heat_kernel(t, x):
    """log p_t(x) for x of shape (..., d); avoids underflow in far tails."""
    _check_time(t)
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return -0.5 * d * np.log(4.0 * np.pi * t) - np.sum(x * x, axis=-1) / (4.0 * t)


def heat_kernel(t, x):
    """p_t(x) for points x of shape (..., d)."""
    return np.exp(log_heat_kernel(t, x))


def heat_kernel_grad(t, x):
    """Gradient -x / (2t) p_t(x), shape (..., d)."""
    x = np.asarray(x, dtype=float)
    return -x / (2.0 * np.asarray(t)[..., None]) * heat_kernel(t, x)[..., None]


def eval_p(q: KernelQuery) -> float:
    return float(heat_kernel(q.time, q.point))


def eval_grad_p(q: KernelQuery) -> np.ndarray:
    return heat_kernel_grad(q.time, q.point)


@dataclass
class SemigroupValue:
    """Result of a quadrature evaluation of P_t f.

    ``error`` combines the panel-halving difference and the Gaussian mass
    outside the integration box (scaled by the largest |f| seen).
    """

    value: np.ndarray
    error: np.ndarray
    tail_mass: float
    warning: bool


def _gauss_legendre_panels(lo, hi, panels, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * nodes + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * weights).ravel()
    return x, w


def _tensor_integral(t, f, x0, half, panels, order, dim):
    nodes, weights = _gauss_legendre_panels(-half, half, panels, order)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.ones(1)
    for _ in range(dim):
        wts = np.multiply.outer(wts, weights).ravel()
    kern = heat_kernel(t, offsets) * wts
    out = np.empty(len(x0))
    fmax = 0.0
    for j, xj in enumerate(x0):
        vals = np.asarray(f(xj - offsets), dtype=float)
        fmax = max(fmax, float(np.max(np.abs(vals))))
        out[j] = kern @ vals
    return out, fmax


def semigroup_apply(
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    x,
    *,
    panels: int = 16,
    order: int = 8,
    width: float = 8.0,
    tail_tol: float = 1e-10,
) -> SemigroupValue:
    """Evaluate P_t f(x) = int p_t(x - y) f(y) dy by composite Gauss-Legendre.

    ``f`` maps points of shape (K, d) to values (K,); ``x`` is a single point
    (d,) or a batch (M, d). The box is x +/- width * sqrt(2t) per axis; d <= 3.
    """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x0 = np.atleast_2d(x)
    dim = x0.shape[1]
    if dim > 3:
        raise ValueError("quadrature-based semigroup supports d <= 3")
    half = width * math.sqrt(2.0 * t)
    fine, fmax = _tensor_integral(t, f, x0, half, panels, order, dim)
    coarse, _ = _tensor_integral(t, f, x0, half, max(panels // 2, 1), order, dim)
    # Gaussian mass of N(0, 2t I) outside the box
    axis_tail = float(erfc(half / (2.0 * math.sqrt(t))))
    tail = 1.0 - (1.0 - axis_tail) ** dim
    error = np.abs(fine - coarse) + tail * fmax
    value = fine[0] if single else fine
    err = error[0] if single else error
    return SemigroupValue(value=value, error=err, tail_mass=tail, warning=tail > tail_tol)


@dataclass(frozen=True)
class ProbeSet:
    """Quasi-random (s, t, x, y) probes with 0 < s < t <= T."""

    s: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def size(self) -> int:
        return self.t.size


def probe_set(n: int, dim: int = 1, T: float = 1.0, seed: int = 0, t_min: float = 1e-3) -> ProbeSet:
    """Scrambled Sobol probes: t log-uniform on [t_min, T], s uniform on (0, t), |x_i|, |y_i| <= 10 sqrt(T)."""
    with warnings.catch_warnings():
        # probe counts need not be powers of two
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d=2 + 2 * dim, scramble=True, seed=seed).random(n)
    t = t_min * (T / t_min) ** u[:, 0]
    s = np.maximum(t * u[:, 1], 1e-12)
    R = 10.0 * math.sqrt(T)
    x = (2.0 * u[:, 2 : 2 + dim] - 1.0) * R
    y = (2.0 * u[:, 2 + dim :] - 1.0) * R
    return ProbeSet(s, t, x, y)


def gradient_bound_sup(dim: int) -> float:
    """sup over t, x of |grad p_t(x)| / (t^(-1/2) p_2t(x)), attained at |x| = 2 sqrt(t)."""
    return 2.0 ** (dim / 2) * math.exp(-0.5)


def _scaled_diff(lp_a, xa, lp_b, xb, order, ta, tb):
    """|grad^i p_a - grad^i p_b| divided by exp(m), m = max(lp_a, lp_b); i = order."""
    m = np.maximum(lp_a, lp_b)
    wa, wb = np.exp(lp_a - m), np.exp(lp_b - m)
    if order == 0:
        return np.abs(wa - wb), m
    ga = -xa / (2.0 * ta[:, None]) * wa[:, None]
    gb = -xb / (2.0 * tb[:, None]) * wb[:, None]
    return np.linalg.norm(ga - gb, axis=1), m


def bound_ratios(probes: ProbeSet, alphas=(0.3, 0.5, 0.9)) -> dict:
    """Largest observed ratio of each classical Gaussian estimate to its majorant.

    Keys: ``p_vs_p2t`` and ``shift`` (both <= 1 exactly), ``gradient``
    (sup is :func:`gradient_bound_sup`), ``space_i_alpha`` and ``time_i_alpha``
    for the spatial and temporal Hoelder bounds with i in {0, 1}. All ratios
    are formed in log space so far-tail probes do not underflow.
    """
    s, t, x, y = probes.s, probes.t, probes.x, probes.y
    d = x.shape[1]
    half_d = 0.5 * d * math.log(2.0)
    out = {}
    lp_t = log_heat_kernel(t, x)
    lp_2t = log_heat_kernel(2 * t, x)
    out["p_vs_p2t"] = float(np.max(np.exp(lp_t - half_d - lp_2t)))
    lp_shift = log_heat_kernel(t, x + y)
    out["shift"] = float(np.max(np.exp(lp_shift - half_d - np.sum(y * y, axis=1) / (4 * t) - lp_2t)))
    r = np.linalg.norm(x, axis=1)
    out["gradient"] = float(np.max(r / (2.0 * np.sqrt(t)) * np.exp(lp_t - lp_2t)))

    lp_ty = log_heat_kernel(t, y)
    lp4x, lp4y = log_heat_kernel(4 * t, x), log_heat_kernel(4 * t, y)
    lmaj_space = np.logaddexp(lp4x, lp4y)
    dist = np.linalg.norm(x - y, axis=1)
    lp_s, lp_2s = log_heat_kernel(s, x), log_heat_kernel(2 * s, x)
    for i in (0, 1):
        num_sp, m_sp = _scaled_diff(lp_t, x, lp_ty, y, i, t, t)
        num_tm, m_tm = _scaled_diff(lp_t, x, lp_s, x, i, t, s)
        for a in alphas:
            den = dist**a * t ** (-(i + a) / 2)
            out[f"space_{i}_{a:g}"] = float(np.max(num_sp / den * np.exp(m_sp - lmaj_space)))
            lmaj = np.logaddexp(-(i + a) / 2 * np.log(t) + lp_2t, -(i + a) / 2 * np.log(s) + lp_2s)
            ratio = num_tm / (t - s) ** (a / 2) * np.exp(m_tm - lmaj)
            out[f"time_{i}_{a:g}"] = float(np.max(ratio))
    return out
