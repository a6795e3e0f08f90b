"""Euler-Maruyama particle scheme with first-step drift cutoff.

On [t_k, t_{k+1}] every particle moves by ``b_k eps + sqrt(2) dB`` where the
drift is frozen at t_k:

* step 0 has no drift (the indicator of (eps, T] vanishes there);
* step k >= 1 uses b(t_k, X_k, l_k(X_k), mu_k), with mu_k the empirical
  measure of cloud k and l_k the one-step Gaussian mixture built from cloud
  k-1 and its frozen drifts (the exact within-step law given cloud k-1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, _rng
from .drift_models import DriftSpec, ProbeConfig, verify_assumptions
from .initial_conditions import InitialDensity, sample
from .measures import EmpiricalMeasure, as_points

__all__ = [
    "AssumptionError",
    "DensityEstimate",
    "ParticleCloud",
    "SchemeConfig",
    "SchemeError",
    "SimulationRecord",
    "TimeGrid",
    "density_estimate",
    "simulate",
    "step",
    "time_map",
]


class SchemeError(ArithmeticError):
    """Non-finite particle state; carries the grid index and particle index."""

    def __init__(self, message, k=None, particle=None):
        super().__init__(message)
        self.k = k
        self.particle = particle


class AssumptionError(ValueError):
    def __init__(self, report):
        super().__init__(f"drift fails its declared assumptions: {report.to_dict()}")
        self.report = report


@dataclass(frozen=True)
class TimeGrid:
    n: int
    T: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one step")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def eps(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.eps

    def time_map(self, t: float) -> tuple[int, float, float]:
        """(k, t_k, eps) with t in [t_k, t_{k+1}); t = T maps to the last cell."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"time {t} outside [0, {self.T}]")
        k = min(int(math.floor(t / self.eps + 1e-9)), self.n - 1)
        return k, k * self.eps, self.eps

    def index_of(self, t: float) -> int:
        """Grid index of a grid time (raises if t is not on the grid)."""
        k = int(round(t / self.eps))
        if abs(k * self.eps - t) > 1e-9 * max(1.0, self.T) or not 0 <= k <= self.n:
            raise ValueError(f"time {t} is not a grid time of n={self.n}, T={self.T}")
        return k


def time_map(grid: TimeGrid, t: float) -> tuple[int, float, float]:
    return grid.time_map(t)


@dataclass
class ParticleCloud:
    """Positions at grid time t_k; ``drift`` is the frozen drift used on [t_k, t_{k+1}]."""

    positions: np.ndarray
    k: int
    t: float
    drift: np.ndarray | None = None

    def __post_init__(self):
        self.positions = as_points(self.positions)
        if not np.all(np.isfinite(self.positions)):
            raise SchemeError("cloud contains non-finite positions", k=self.k)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


def _resolve_accelerator(accelerator, dim):
    if accelerator == "auto":
        return "fgt" if dim == 1 else "truncated"
    if accelerator == "fgt" and dim != 1:
        raise ValueError("the fast Gauss transform is implemented for d = 1 only")
    if accelerator not in ("fgt", "truncated", "exact"):
        raise ValueError(f"unknown accelerator {accelerator!r}")
    return accelerator


def _mixture(centers, dt, x, accelerator, radius_mult, weights=None):
    n = centers.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else weights
    acc = _resolve_accelerator(accelerator, centers.shape[1])
    if acc == "fgt":
        return _kernels.fgt_1d(centers[:, 0], w, x[:, 0], dt, radius_mult)
    radius = math.inf if acc == "exact" else radius_mult * math.sqrt(2.0 * dt)
    return _kernels.direct_sum(centers, w, x, dt, radius)


def density_estimate(prev_cloud, frozen_drifts, dt, x, *, accelerator="auto", radius_mult=8.0):
    """(1/N) sum_i p_dt(x - X_i - b_i dt): the scheme's density dt after ``prev_cloud``.

    Returns ``(values, bound)``; ``bound`` caps the error from truncation
    (particles beyond radius_mult * sqrt(2 dt)) and series truncation.
    """
    if not dt > 0:
        raise ValueError("elapsed in-step time must be positive")
    pos = prev_cloud.positions if isinstance(prev_cloud, ParticleCloud) else as_points(prev_cloud)
    b = np.zeros_like(pos) if frozen_drifts is None else as_points(frozen_drifts, pos.shape[1])
    return _mixture(pos + b * dt, dt, as_points(x, pos.shape[1]), accelerator, radius_mult)


class DensityEstimate:
    """Evaluable approximation of the marginal density at one time.

    kind is ``exact_initial`` (closed form), ``one_step_mixture`` (Gaussian
    mixture with variance 2 dt around the drifted previous cloud) or ``kde``
    (Gaussian kernel with Silverman bandwidth on the current cloud).
    """

    def __init__(self, kind, *, ic=None, centers=None, dt=None, accelerator="auto", radius_mult=8.0):
        if kind not in ("exact_initial", "one_step_mixture", "kde"):
            raise ValueError(f"unknown density kind {kind!r}")
        self.kind = kind
        self.ic = ic
        self.centers = centers
        self.dt = dt
        self.accelerator = accelerator
        self.radius_mult = radius_mult

    @classmethod
    def exact_initial(cls, ic: InitialDensity):
        return cls("exact_initial", ic=ic)

    @classmethod
    def one_step_mixture(cls, prev_positions, drifts, dt, **kw):
        pos = as_points(prev_positions)
        centers = pos if drifts is None else pos + as_points(drifts, pos.shape[1]) * dt
        return cls("one_step_mixture", centers=centers, dt=dt, **kw)

    @classmethod
    def kde(cls, positions, bandwidth=None, **kw):
        pos = as_points(positions)
        n, d = pos.shape
        if bandwidth is None:
            spread = float(np.mean(np.std(pos, axis=0, ddof=1)))
            bandwidth = spread * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
        # kernel std h corresponds to heat time h^2 / 2
        return cls("kde", centers=pos, dt=bandwidth**2 / 2.0, **kw)

    @property
    def dim(self) -> int:
        return self.ic.dim if self.kind == "exact_initial" else self.centers.shape[1]

    def evaluate(self, x):
        x = as_points(x, self.dim)
        if self.kind == "exact_initial":
            return self.ic.density(x), np.zeros(x.shape[0])
        return _mixture(self.centers, self.dt, x, self.accelerator, self.radius_mult)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def standard_error(self, x) -> np.ndarray:
        """Monte Carlo standard error of the particle average at x (0 for exact)."""
        x = as_points(x, self.dim)
        if self.kind == "exact_initial":
            return np.zeros(x.shape[0])
        return _kernels.mixture_standard_error(self.centers, x, self.dt)


@dataclass
class SchemeConfig:
    grid: TimeGrid
    N: int
    dim: int = 1
    density_mode: str = "mixture"
    accelerator: str = "auto"
    radius_mult: float = 8.0
    seed: int = 0
    p: float = 1.0
    record_every: int = 1
    record_times: tuple | None = None
    keep_clouds: str = "recorded"
    workers: int = 1

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two particles")
        if self.radius_mult < 4:
            raise ValueError("truncation radius multiplier must be >= 4")
        if self.density_mode not in ("mixture", "kde"):
            raise ValueError(f"unknown density mode {self.density_mode!r}")
        if self.keep_clouds not in ("recorded", "all"):
            raise ValueError("keep_clouds is 'recorded' or 'all'")
        _resolve_accelerator(self.accelerator, self.dim)

    def recorded_indices(self) -> list[int]:
        n = self.grid.n
        if self.record_times is not None:
            ks = {self.grid.index_of(t) for t in self.record_times}
        else:
            ks = set(range(0, n + 1, max(1, self.record_every)))
        return sorted(ks | {0, n})

    def to_dict(self) -> dict:
        # workers is an execution detail (kept in the run manifest), never part of the result
        out = {k: v for k, v in self.__dict__.items() if k not in ("grid", "workers")}
        out["n"] = self.grid.n
        out["T"] = self.grid.T
        if self.record_times is not None:
            out["record_times"] = [float(t) for t in self.record_times]
        return out


@dataclass
class SimulationRecord:
    config: SchemeConfig
    clouds: dict = field(default_factory=dict)
    densities: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)
    drift_name: str = ""
    ic: InitialDensity | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.config.grid

    @property
    def recorded(self) -> list[int]:
        return sorted(self.densities)

    def recorded_times(self) -> np.ndarray:
        return np.array([k * self.grid.eps for k in self.recorded])

    def cloud_at(self, t: float) -> ParticleCloud:
        return self.clouds[self.grid.index_of(t)]

    def density_at(self, t: float) -> DensityEstimate:
        return self.densities[self.grid.index_of(t)]

    def measure_at(self, t: float) -> EmpiricalMeasure:
        return self.cloud_at(t).measure()

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "drift": self.drift_name,
            "recorded_times": [float(t) for t in self.recorded_times()],
            "checkpoints": {str(k): v for k, v in sorted(self.checkpoints.items())},
        }

    def save(self, out_dir, grid_spec=(-8.0, 8.0, 401)) -> list[Path]:
        """Write clouds/*.csv, densities/*.csv (d = 1) and record.json; return the paths."""
        out = Path(out_dir)
        (out / "clouds").mkdir(parents=True, exist_ok=True)
        written = []
        for k in self.recorded:
            if k in self.clouds:
                path = out / "clouds" / f"cloud_k{k:04d}.csv"
                np.savetxt(path, self.clouds[k].positions, fmt="%.17g", delimiter=",",
                           header=",".join(f"x{i}" for i in range(self.config.dim)), comments="")
                written.append(path)
        if self.config.dim == 1:
            (out / "densities").mkdir(exist_ok=True)
            xs = np.linspace(*grid_spec)
            for k in self.recorded:
                vals = self.densities[k](xs)
                path = out / "densities" / f"density_k{k:04d}.csv"
                np.savetxt(path, np.column_stack([xs, vals]), fmt="%.17g", delimiter=",",
                           header="x,density", comments="")
                written.append(path)
        path = out / "record.json"
        path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        written.append(path)
        return written


def step(cloud: ParticleCloud, drift: DriftSpec, config: SchemeConfig, rng=None, *, density=None, noise=None):
    """Advance ``cloud`` from t_k to t_{k+1}; sets ``cloud.drift`` to the frozen drift used.

    ``density`` evaluates l_k at particle positions (required for k >= 1).
    Noise is standard normal of shape (N, d): taken from ``noise`` if given,
    else from ``rng``, else from the (seed, step) substream.
    """
    grid = config.grid
    eps = grid.eps
    x = cloud.positions
    if cloud.k == 0:
        b = np.zeros_like(x)
    else:
        if density is None:
            raise ValueError("steps after the first need the density at t_k")
        r = density(x)
        b = np.asarray(drift(cloud.t, x, r, cloud.measure()), dtype=float)
        if not np.all(np.isfinite(b)):
            i = int(np.flatnonzero(~np.all(np.isfinite(b), axis=1))[0])
            raise SchemeError(f"non-finite drift at particle {i}, step {cloud.k}", cloud.k, i)
    if noise is None:
        gen = rng if rng is not None else _rng.substream(config.seed, _rng.NOISE, cloud.k)
        noise = gen.standard_normal(x.shape)
    new = x + b * eps + math.sqrt(2.0 * eps) * noise
    bad = ~np.all(np.isfinite(new), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SchemeError(f"non-finite position at particle {i} after step {cloud.k}", cloud.k, i)
    cloud.drift = b
    return ParticleCloud(new, cloud.k + 1, (cloud.k + 1) * eps)


def simulate(config: SchemeConfig, drift: DriftSpec, ic: InitialDensity, *, verify=True, probes=None):
    """Run the scheme from X_0 ~ ic to T and return the record.

    With ``verify`` the drift is probed first and an :class:`AssumptionError`
    raised if it violates its declared constants.
    """
    if ic.dim != config.dim:
        raise ValueError(f"initial law has dimension {ic.dim}, config says {config.dim}")
    if verify:
        report = verify_assumptions(drift, probes or ProbeConfig(n_probes=128, dim=config.dim, t_max=config.grid.T), seed=config.seed)
        if not report.passed:
            raise AssumptionError(report)
    _kernels.set_threads(config.workers)
    grid = config.grid
    eps = grid.eps
    recorded = set(config.recorded_indices())
    record = SimulationRecord(config=config, drift_name=drift.name, ic=ic)

    cloud = ParticleCloud(sample(ic, config.N, config.seed), 0, 0.0)
    density = DensityEstimate.exact_initial(ic)
    kw = {"accelerator": config.accelerator, "radius_mult": config.radius_mult}
    for k in range(grid.n + 1):
        if config.density_mode == "kde" and k > 0:
            density = DensityEstimate.kde(cloud.positions, **kw)
        if k in recorded:
            record.densities[k] = density
        if k in recorded or config.keep_clouds == "all":
            record.clouds[k] = cloud
        if k == grid.n:
            break
        record.checkpoints[k] = {"seed": int(config.seed), "stream": [_rng.NOISE, k]}
        try:
            nxt = step(cloud, drift, config, density=density)
        except SchemeError as exc:
            exc.k = k
            raise
        density = DensityEstimate.one_step_mixture(cloud.positions, cloud.drift, eps, **kw)
        if k not in recorded and config.keep_clouds != "all":
            cloud.drift = None
        cloud = nxt
    return record
