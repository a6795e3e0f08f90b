"""Bounded drifts b(t, x, r, rho) and a probe-based checker for their constants.

Evaluators are vectorised: ``x`` has shape (N, d), ``r`` shape (N,), ``rho``
is an :class:`EmpiricalMeasure`, and the result has shape (N, d).
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .measures import EmpiricalMeasure, as_points, wasserstein_p

__all__ = [
    "AssumptionProbeError",
    "AssumptionReport",
    "DriftModelError",
    "DriftSpec",
    "ProbeConfig",
    "DRIFTS",
    "burgers_clamp",
    "constant_drift",
    "evaluate",
    "make_drift",
    "mean_field_attraction",
    "mean_field_unsaturated",
    "mixed_drift",
    "verify_assumptions",
    "zero_drift",
]

SAFETY = 1.05


class DriftModelError(ArithmeticError):
    """A drift returned non-finite values."""


class AssumptionProbeError(RuntimeError):
    def __init__(self, message, probe):
        super().__init__(f"{message} (probe: {probe})")
        self.probe = probe


@dataclass(frozen=True)
class DriftSpec:
    name: str
    evaluator: Callable[[float, np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
    bound_C: float
    lip_density: float
    lip_measure: float
    p: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_C < 0 or self.lip_density < 0 or self.lip_measure < 0:
            raise ValueError("declared drift constants must be nonnegative")
        if self.p < 1:
            raise ValueError("Wasserstein order must be >= 1")

    def __call__(self, t, x, r, rho):
        return self.evaluator(t, x, r, rho)


def evaluate(spec: DriftSpec, t: float, x, r, rho: EmpiricalMeasure) -> np.ndarray:
    """Evaluate b at one point (x of shape (d,)) or a batch (x of shape (N, d))."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and x_arr.size == rho.dim)
    pts = as_points(x_arr, rho.dim)
    r = np.broadcast_to(np.asarray(r, dtype=float), (pts.shape[0],))
    if np.any(r < 0):
        raise ValueError("density argument must be nonnegative")
    out = np.asarray(spec.evaluator(t, pts, r, rho), dtype=float)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmin(np.all(np.isfinite(out), axis=-1)))
        raise DriftModelError(f"drift {spec.name!r} returned non-finite value at index {bad}")
    return out[0] if single else out


def _saturate(v, C):
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.minimum(1.0, C / np.maximum(norm, 1e-300))
    return v * scale


def _unit(direction, d):
    e = np.zeros(d)
    if direction is None:
        e[0] = 1.0
    else:
        e[:] = np.asarray(direction, dtype=float)
        e /= np.linalg.norm(e)
    return e


def zero_drift() -> DriftSpec:
    return DriftSpec("zero", lambda t, x, r, rho: np.zeros_like(x), 0.0, 0.0, 0.0)


def constant_drift(c=1.0) -> DriftSpec:
    """b = c; a scalar c acts along the first axis."""
    c_vec = np.atleast_1d(np.asarray(c, dtype=float))

    def b(t, x, r, rho):
        out = np.zeros_like(x)
        if c_vec.size == 1:
            out[:, 0] = c_vec[0]
        else:
            out[:] = c_vec
        return out

    return DriftSpec("constant", b, float(np.linalg.norm(c_vec)), 0.0, 0.0, params={"c": c})


def burgers_clamp(C=1.0, direction=None) -> DriftSpec:
    """b = min(r, C) e: depends on the density value only."""

    def b(t, x, r, rho):
        e = _unit(direction, x.shape[1])
        return np.minimum(r, C)[:, None] * e

    return DriftSpec("burgers_clamp", b, float(C), 1.0, 0.0, params={"C": C})


def mean_field_attraction(C=5.0) -> DriftSpec:
    """b = sat_C(mean(rho) - x); 1-Lipschitz in rho for every W_p."""

    def b(t, x, r, rho):
        return _saturate(rho.mean()[None, :] - x, C)

    return DriftSpec("mean_field_attraction", b, float(C), 0.0, 1.0, params={"C": C})


def mean_field_unsaturated(C=5.0) -> DriftSpec:
    """b = mean(rho) - x with a *claimed* bound C; unbounded in truth."""

    def b(t, x, r, rho):
        return rho.mean()[None, :] - x

    return DriftSpec("mean_field_unsaturated", b, float(C), 0.0, 1.0, params={"C": C})


def mixed_drift(weight=0.5, C=1.0, C_attract=1.0, direction=None) -> DriftSpec:
    """weight * burgers_clamp(C) + (1 - weight) * mean_field_attraction(C_attract)."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    dens = burgers_clamp(C, direction)
    meas = mean_field_attraction(C_attract)

    def b(t, x, r, rho):
        return weight * dens.evaluator(t, x, r, rho) + (1.0 - weight) * meas.evaluator(t, x, r, rho)

    return DriftSpec(
        "mixed",
        b,
        weight * C + (1.0 - weight) * C_attract,
        weight,
        1.0 - weight,
        params={"weight": weight, "C": C, "C_attract": C_attract},
    )


DRIFTS = {
    "zero": zero_drift,
    "constant": constant_drift,
    "burgers_clamp": burgers_clamp,
    "mean_field_attraction": mean_field_attraction,
    "mean_field_unsaturated": mean_field_unsaturated,
    "mixed": mixed_drift,
}


def make_drift(name: str, **params) -> DriftSpec:
    try:
        factory = DRIFTS[name]
    except KeyError:
        raise KeyError(f"unknown drift model {name!r}; choose from {sorted(DRIFTS)}") from None
    return factory(**params)


@dataclass
class ProbeConfig:
    n_probes: int = 256
    dim: int = 1
    t_max: float = 1.0
    x_radius: float = 10.0
    r_max: float = 2.0
    measure_size: int = 12
    measure_radius: float = 5.0
    density_step: float = 1e-3
    shift: float = 1e-2

    def __post_init__(self):
        if self.n_probes < 100:
            raise ValueError("verify_assumptions needs at least 100 probes")


@dataclass
class AssumptionReport:
    max_abs_b_observed: float
    worst_density_lipschitz_ratio: float
    worst_measure_lipschitz_ratio: float
    probe_count: int
    pass_A1: bool
    pass_A3_density: bool
    pass_A3_measure: bool

    @property
    def passed(self) -> bool:
        return self.pass_A1 and self.pass_A3_density and self.pass_A3_measure

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def verify_assumptions(spec: DriftSpec, probes: ProbeConfig | None = None, seed: int = 0) -> AssumptionReport:
    """Probe boundedness and Lipschitz continuity of ``spec`` against its declared constants.

    Points come from a scrambled Sobol sequence. Each probe also compares
    b at r vs r + delta and at rho vs rho with a random subset shifted by
    ``shift``; the measure ratio uses the exact W_p of that perturbation.
    """
    probes = probes or ProbeConfig()
    d = probes.dim
    rng = np.random.default_rng(seed)
    sobol = qmc.Sobol(d=2 + d, scramble=True, seed=rng)
    u = sobol.random(probes.n_probes)
    ts = u[:, 0] * probes.t_max
    rs = u[:, 1] * probes.r_max
    xs = (2.0 * u[:, 2:] - 1.0) * probes.x_radius

    max_b = worst_r = worst_m = 0.0
    for k in range(probes.n_probes):
        t, x, r = float(ts[k]), xs[k : k + 1], rs[k : k + 1]
        pts = (2.0 * rng.random((probes.measure_size, d)) - 1.0) * probes.measure_radius
        rho = EmpiricalMeasure(pts)
        probe = {"t": t, "x": x[0].tolist(), "r": float(r[0])}
        try:
            b0 = evaluate(spec, t, x, r, rho)[0]
            dr = probes.density_step * (1.0 if rng.random() < 0.5 else -1.0)
            r1 = np.maximum(r + dr, 0.0)
            b1 = evaluate(spec, t, x, r1, rho)[0]
            moved = rng.random(probes.measure_size) < 0.5
            moved[rng.integers(probes.measure_size)] = True
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            rho2 = EmpiricalMeasure(pts + np.outer(moved, direction) * probes.shift)
            b2 = evaluate(spec, t, x, r, rho2)[0]
        except Exception as exc:  # attach the offending probe
            raise AssumptionProbeError(f"drift {spec.name!r} failed: {exc}", probe) from exc
        max_b = max(max_b, float(np.linalg.norm(b0)))
        if r1[0] != r[0]:
            worst_r = max(worst_r, float(np.linalg.norm(b1 - b0) / abs(r1[0] - r[0])))
        w = wasserstein_p(spec.p, rho, rho2)
        if w > 0:
            worst_m = max(worst_m, float(np.linalg.norm(b2 - b0) / w))

    return AssumptionReport(
        max_abs_b_observed=max_b,
        worst_density_lipschitz_ratio=worst_r,
        worst_measure_lipschitz_ratio=worst_m,
        probe_count=probes.n_probes,
        pass_A1=max_b <= spec.bound_C * SAFETY,
        pass_A3_density=worst_r <= spec.lip_density * SAFETY,
        pass_A3_measure=worst_m <= spec.lip_measure * SAFETY,
    )
