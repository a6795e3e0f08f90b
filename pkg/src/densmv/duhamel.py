"""Density of the scheme from the heat flow of the initial law plus a drift correction.

    l^n_t(x) = P_t l_nu(x) + int_0^t E< b^n(s, X_{tau(s)}), grad p_{t-s}(X_s - x) > ds

The expectation is a particle average. Off-grid positions X_s come from
Brownian bridges between the stored grid clouds; since the drift is frozen
on each step, the bridge is the exact conditional law of the path. The time
integral is taken in u = sqrt((t - s) / t), which removes the (t-s)^(-1/2)
singularity, with two-point Gauss-Legendre on a uniform u-mesh refined at
grid times. A coarse rule on the same sampled paths gives the quadrature
error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, _rng
from .drift_models import DriftSpec
from .em_scheme import SimulationRecord
from .heat_kernel import semigroup_apply
from .initial_conditions import InitialDensity
from .measures import as_points

__all__ = ["CrossCheck", "DuhamelQuery", "DuhamelResult", "cross_validate", "duhamel_density"]


@dataclass
class DuhamelQuery:
    t: float
    x: np.ndarray
    record: SimulationRecord
    nodes: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 16:
            raise ValueError("time quadrature needs at least 16 cells")
        self.x = as_points(self.x, self.record.config.dim)
        grid = self.record.grid
        if not 0 < self.t <= grid.T * (1 + 1e-12):
            raise ValueError(f"t={self.t} outside (0, T]")
        kmax = int(math.ceil(self.t / grid.eps - 1e-9))
        missing = [k for k in range(kmax + 1) if k not in self.record.clouds]
        if missing:
            raise ValueError(f"record lacks grid clouds {missing[:5]}...; simulate with keep_clouds='all'")


@dataclass
class DuhamelResult:
    x: np.ndarray
    values: np.ndarray
    heat_term: np.ndarray
    drift_term: np.ndarray
    mc_error: np.ndarray
    quad_error: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.mc_error + self.quad_error


def _u_cells(t, eps, cells):
    """Cell edges in u for the fine rule and the coarse rule (every other edge)."""
    u_uniform = np.linspace(0.0, 1.0, cells + 1)
    ks = np.arange(1, int(math.ceil(t / eps - 1e-9)))
    breaks = np.sqrt(np.clip((t - ks * eps) / t, 0.0, 1.0))
    coarse = np.unique(np.concatenate([u_uniform[::2], [1.0], breaks]))
    fine = np.unique(np.concatenate([u_uniform, breaks]))
    return fine, coarse


def _gauss_nodes(edges, order=2):
    g, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    return (0.5 * (b - a) * g + 0.5 * (a + b)).ravel(), (0.5 * (b - a) * w).ravel()


def duhamel_density(q: DuhamelQuery, drift: DriftSpec, ic: InitialDensity) -> DuhamelResult:
    """Evaluate the Duhamel representation of l^n_t on the points of ``q``.

    The record must contain every grid cloud up to t together with the frozen
    drifts the scheme used (``keep_clouds='all'``).
    """
    rec, t = q.record, q.t
    grid = rec.grid
    eps = grid.eps
    if rec.drift_name != drift.name:
        raise ValueError(f"record was produced with drift {rec.drift_name!r}, not {drift.name!r}")
    first = rec.clouds[0].drift
    if first is None or np.any(first != 0.0):
        raise ValueError("step 0 carries a nonzero drift: the record ignores the first-step cutoff")

    heat = semigroup_apply(t, ic.density, q.x)

    fine_edges, coarse_edges = _u_cells(t, eps, q.nodes)
    uf, wf = _gauss_nodes(fine_edges)
    uc, wc = _gauss_nodes(coarse_edges)
    u_all = np.concatenate([uf, uc])
    # ds = 2 t u du with s = t (1 - u^2)
    w_fine = np.concatenate([wf * 2 * t * uf, np.zeros_like(uc)])
    w_coarse = np.concatenate([np.zeros_like(uf), wc * 2 * t * uc])
    s_all = t * (1.0 - u_all**2)
    order = np.argsort(s_all, kind="stable")
    s_all, w_fine, w_coarse = s_all[order], w_fine[order], w_coarse[order]
    tau = t - s_all

    N, d = rec.clouds[0].positions.shape
    J = s_all.size
    pos = np.empty((J, N, d))
    steps = sorted({int(k) for k in np.minimum((s_all / eps + 1e-12).astype(int), grid.n - 1)})
    drf = np.stack([rec.clouds[k].drift for k in steps])
    slot = {k: i for i, k in enumerate(steps)}
    ks = np.minimum((s_all / eps + 1e-12).astype(int), grid.n - 1)
    for k in np.unique(ks):
        idx = np.flatnonzero(ks == k)
        left, right = rec.clouds[k], rec.clouds[k + 1]
        a, xa = k * eps, left.positions
        xb, b_end = right.positions, (k + 1) * eps
        rng = _rng.substream(q.seed, _rng.BRIDGE, int(k))
        # sequential bridge through the sorted node times of this step
        for j in idx:
            s = s_all[j]
            frac = (s - a) / (b_end - a)
            var = 2.0 * (s - a) * (b_end - s) / (b_end - a)
            xa = xa + frac * (xb - xa) + math.sqrt(max(var, 0.0)) * rng.standard_normal((N, d))
            a = s
            pos[j] = xa
    node_step = np.array([slot[int(k)] for k in ks], dtype=np.int64)
    s1, s2, sc = _kernels._duhamel_accumulate(pos, drf, node_step, tau, w_fine, w_coarse, q.x)
    drift_term = s1 / N
    var = np.maximum(s2 / N - drift_term**2, 0.0) * N / (N - 1)
    mc = np.sqrt(var / N)
    quad = np.abs(drift_term - sc / N) + np.asarray(heat.error)
    return DuhamelResult(
        x=q.x,
        values=heat.value + drift_term,
        heat_term=np.asarray(heat.value),
        drift_term=drift_term,
        mc_error=mc,
        quad_error=quad,
    )


@dataclass
class CrossCheck:
    x: np.ndarray
    duhamel: np.ndarray
    mixture: np.ndarray
    combined_error: np.ndarray
    duhamel_integral: float
    mixture_integral: float

    @property
    def max_ratio(self) -> float:
        return float(np.max(np.abs(self.duhamel - self.mixture) / self.combined_error))

    def to_rows(self):
        return [
            {"x": float(xi[0]), "duhamel": float(a), "mixture": float(b), "combined_error": float(c)}
            for xi, a, b, c in zip(self.x, self.duhamel, self.mixture, self.combined_error)
        ]


def cross_validate(q: DuhamelQuery, drift: DriftSpec, ic: InitialDensity) -> CrossCheck:
    """Compare the Duhamel evaluation with the one-step mixture at time q.t.

    The combined error is the Duhamel error plus the mixture's Monte Carlo
    error. Each mixture term lies in [0, B] with B = (4 pi eps)^(-d/2), so its
    variance is at most B times its mean; this bound, with the larger of the
    two density values standing in for the mean, floors the sample standard
    error where too few particles contribute for the latter to be reliable.
    """
    res = duhamel_density(q, drift, ic)
    dens = q.record.density_at(q.t)
    mix = dens(q.x)
    N, d = q.record.clouds[0].positions.shape
    B = (4.0 * math.pi * q.record.grid.eps) ** (-d / 2.0)
    floor = np.sqrt(B * np.maximum(np.maximum(mix, res.values), 0.0) / N)
    se = np.maximum(dens.standard_error(q.x), floor)
    combined = res.error + se
    integ = [float("nan"), float("nan")]
    if d == 1:
        xs = q.x[:, 0]
        integ = [float(np.trapezoid(res.values, xs)), float(np.trapezoid(mix, xs))]
    return CrossCheck(q.x, res.values, mix, combined, integ[0], integ[1])
