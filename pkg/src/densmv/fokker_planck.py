"""Finite-volume solver for d_t l = -d_x(b(t, x, l, mu_t) l) + d_xx l in one dimension.

Cell-centred mesh on [-L, L] with no-flux walls. Each step applies explicit
upwind advection with face velocities averaged from cell centres, then an
implicit (backward Euler) diffusion solve. Both stages are in flux form, so
discrete mass is conserved to rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .drift_models import DriftSpec
from .initial_conditions import InitialDensity
from .measures import EmpiricalMeasure, moment, tail_mass

__all__ = [
    "CFLError",
    "DomainTooSmallError",
    "FPConfig",
    "FPMeasures",
    "FPTrajectory",
    "fp_measures",
    "fp_solve",
]


class CFLError(ValueError):
    pass


class DomainTooSmallError(RuntimeError):
    """Density reached the walls; rerun on a wider domain."""


@dataclass
class FPConfig:
    L: float
    h: float
    dt: float
    drift: DriftSpec
    ic: InitialDensity
    p: float = 1.0
    mode: str = "semi_implicit"
    boundary_tol: float = 1e-10
    clip_tol: float = 1e-12

    def __post_init__(self):
        if self.ic.dim != 1:
            raise ValueError("the Fokker-Planck oracle is one-dimensional")
        if self.mode not in ("semi_implicit", "explicit"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "explicit" and self.dt > self.h**2 / 4:
            raise CFLError(f"explicit mode needs dt <= h^2/4 = {self.h**2 / 4:g}, got {self.dt:g}")
        if self.drift.bound_C * self.dt > self.h:
            raise CFLError(f"advection CFL violated: C dt / h = {self.drift.bound_C * self.dt / self.h:g} > 1")

    @classmethod
    def auto(cls, drift, ic, T, h=1 / 400, cfl=0.5, margin=10.0, **kw):
        """Domain wide enough for ic plus drift transport plus `margin` diffusion lengths."""
        L = ic.extent(1e-13) + drift.bound_C * T + margin * math.sqrt(2.0 * T)
        L = h * math.ceil(L / h)
        dt = h * h / 4 if kw.get("mode") == "explicit" else h / 4
        if drift.bound_C > 0:
            dt = min(dt, cfl * h / drift.bound_C)
        return cls(L=L, h=h, dt=dt, drift=drift, ic=ic, **kw)

    @property
    def mesh(self) -> np.ndarray:
        m = int(round(2 * self.L / self.h))
        return -self.L + (np.arange(m) + 0.5) * self.h

    def to_dict(self) -> dict:
        return {"L": self.L, "h": self.h, "dt": self.dt, "drift": self.drift.name, "p": self.p, "mode": self.mode}


@dataclass
class FPTrajectory:
    x: np.ndarray
    times: np.ndarray
    density: np.ndarray
    h: float
    dt: float
    mass: np.ndarray
    clipped_mass: float = 0.0
    boundary_max: float = 0.0
    config: dict = field(default_factory=dict)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} not stored in the trajectory")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.density[self.index_of(t)]

    def evaluator(self, t: float):
        """Density at time t as a function of x (linear interpolation, zero outside)."""
        vals = self.at(t)
        x = self.x

        def f(pts):
            pts = np.asarray(pts, dtype=float).reshape(-1)
            return np.interp(pts, x, vals, left=0.0, right=0.0)

        return f

    def to_csv(self, path) -> None:
        header = "t," + ",".join(f"{v:.10g}" for v in self.x)
        rows = np.column_stack([self.times, self.density])
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")

    def config_json(self) -> str:
        return json.dumps(self.config, indent=2, sort_keys=True)


def _mesh_measure(x, u, h):
    w = np.maximum(u, 0.0) * h
    return EmpiricalMeasure(x, w / w.sum())


def _diffusion_bands(m, r):
    # (I - dt * Laplacian_neumann) with r = dt / h^2
    ab = np.zeros((3, m))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1 + 2 * r
    ab[1, 0] = ab[1, -1] = 1 + r
    return ab


def _advect(u, b, dt, h):
    bf = 0.5 * (b[1:] + b[:-1])
    flux = np.maximum(bf, 0.0) * u[:-1] + np.minimum(bf, 0.0) * u[1:]
    div = np.zeros_like(u)
    div[:-1] += flux
    div[1:] -= flux
    return u - dt / h * div


def _laplacian(u, h):
    lap = np.zeros_like(u)
    g = (u[1:] - u[:-1]) / h
    lap[:-1] += g
    lap[1:] -= g
    return lap / h


def fp_solve(cfg: FPConfig, T: float, save_times=None) -> FPTrajectory:
    """Solve to time T, storing the density at ``save_times`` (default: 0 and T).

    The step is shrunk so that every save time is hit exactly. Raises
    :class:`DomainTooSmallError` if the wall density exceeds ``boundary_tol``.
    """
    x = cfg.mesh
    h, m = cfg.h, x.size
    saves = sorted({0.0, float(T)} | {float(t) for t in (save_times if save_times is not None else ())})
    if saves[0] < 0 or saves[-1] > T + 1e-12:
        raise ValueError("save times must lie in [0, T]")

    u = cfg.ic.density(x[:, None]).astype(float)
    out = [u.copy()]
    masses = [u.sum() * h]
    clipped = 0.0
    wall = max(u[0], u[-1])
    t = 0.0
    for target in saves[1:]:
        span = target - t
        steps = max(1, int(math.ceil(span / cfg.dt - 1e-9)))
        dt = span / steps
        ab = _diffusion_bands(m, dt / h**2) if cfg.mode == "semi_implicit" else None
        for _ in range(steps):
            mu = _mesh_measure(x, u, h)
            b = cfg.drift(t, x[:, None], np.maximum(u, 0.0), mu)[:, 0]
            if np.max(np.abs(b)) * dt > h:
                raise CFLError(f"advection CFL violated at t={t:g}")
            u = _advect(u, b, dt, h)
            if cfg.mode == "semi_implicit":
                u = solve_banded((1, 1), ab, u)
            else:
                u = u + dt * _laplacian(u, h)
            neg = u < 0
            if neg.any():
                if u[neg].min() < -cfg.clip_tol:
                    clipped += -u[neg].sum() * h
                u[neg] = 0.0
            t += dt
            wall = max(wall, u[0], u[-1])
        t = target
        out.append(u.copy())
        masses.append(u.sum() * h)

    if wall > cfg.boundary_tol:
        raise DomainTooSmallError(f"wall density {wall:.3g} exceeds {cfg.boundary_tol:g}; enlarge L={cfg.L}")
    return FPTrajectory(
        x=x,
        times=np.array(saves),
        density=np.array(out),
        h=h,
        dt=cfg.dt,
        mass=np.array(masses),
        clipped_mass=clipped,
        boundary_max=wall,
        config=cfg.to_dict(),
    )


@dataclass
class FPMeasures:
    measure: EmpiricalMeasure
    moments: dict
    tails: dict


def fp_measures(traj: FPTrajectory, t: float, ps=(0.0, 1.0, 2.0), radii=(), p_tail: float = 1.0) -> FPMeasures:
    """Mesh-weighted discrete measure at t with its moments M_p and tail masses."""
    vals = traj.at(t)
    w = np.maximum(vals, 0.0) * traj.h
    mass = w.sum()
    mu = EmpiricalMeasure(traj.x, w / mass)
    moments = {float(q): moment(q, mu) * mass for q in ps}
    tails = {float(R): tail_mass(p_tail, R, mu) * mass for R in radii}
    return FPMeasures(mu, moments, tails)
