"""Error norms, increment diagnostics, tail scans and log-log rate fitting."""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .drift_models import DriftSpec
from .em_scheme import SchemeConfig, SimulationRecord, TimeGrid, simulate
from .fokker_planck import FPConfig, FPTrajectory, fp_solve
from .initial_conditions import InitialDensity
from .measures import EmpiricalMeasure, as_points, tail_mass, wasserstein_p

__all__ = [
    "ConvergenceResult",
    "DegenerateFitError",
    "HolderDiagnostic",
    "IncrementDiagnostic",
    "QuadratureGrid",
    "RateFit",
    "ReferenceBudgetError",
    "TailMassWarning",
    "convergence_study",
    "default_radii",
    "dyadic_times",
    "holder_time_diagnostic",
    "rate_fit",
    "tail_scan",
    "wasserstein_increment_diagnostic",
    "weighted_l1_error",
]


class DegenerateFitError(ValueError):
    pass


class ReferenceBudgetError(RuntimeError):
    def __init__(self, message, budget):
        super().__init__(f"{message}: {budget}")
        self.budget = budget


class TailMassWarning(UserWarning):
    pass


@dataclass
class RateFit:
    """Least-squares fit of log(error) = intercept + slope * log(x)."""

    x: list
    errors: list
    slope: float
    intercept: float
    residual: float
    half_width: float
    confidence: float = 0.95

    def to_dict(self) -> dict:
        return asdict(self)


def rate_fit(ns: Sequence[float], errors: Sequence[float], confidence: float = 0.95) -> RateFit:
    """Slope of log error vs log n; ``half_width`` is the Student-t interval half-width.

    ``residual`` is the root-mean-square of the log residuals.
    """
    x = np.asarray(ns, dtype=float)
    y = np.asarray(errors, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise ValueError("rate fit needs at least 3 (n, error) pairs")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("rate fit needs strictly positive abscissae and errors")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * lx + intercept)
    ssr = float(res @ res)
    m = x.size
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    se = math.sqrt(ssr / (m - 2) / sxx) if m > 2 and sxx > 0 else 0.0
    half = float(stats.t.ppf(0.5 + confidence / 2, m - 2) * se) if m > 2 else math.inf
    return RateFit(
        x=x.tolist(),
        errors=y.tolist(),
        slope=float(slope),
        intercept=float(intercept),
        residual=math.sqrt(ssr / m),
        half_width=half,
        confidence=confidence,
    )


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint tensor grid on [lo, hi]^dim with ``num`` cells per axis."""

    lo: float
    hi: float
    num: int
    dim: int = 1

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.num

    @property
    def points(self) -> np.ndarray:
        h = self.spacing
        axis = self.lo + (np.arange(self.num) + 0.5) * h
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def boundary_mask(self) -> np.ndarray:
        idx = np.indices((self.num,) * self.dim).reshape(self.dim, -1)
        return np.any((idx == 0) | (idx == self.num - 1), axis=0)


def _values(f, pts):
    if callable(f):
        return np.asarray(f(pts), dtype=float).ravel()
    return np.asarray(f, dtype=float).ravel()


def weighted_l1_error(
    f: Callable | np.ndarray,
    g: Callable | np.ndarray,
    p: float = 1.0,
    grid: QuadratureGrid | None = None,
    tail_tol: float = 1e-8,
) -> float:
    """int (1 + |x|^p) |f - g| dx by the midpoint rule on ``grid``.

    ``f`` and ``g`` are callables on (K, d) points or arrays of grid values.
    Warns with :class:`TailMassWarning` when either density is not negligible
    on the outer cells.
    """
    grid = grid or QuadratureGrid(-12.0, 12.0, 4800)
    pts = grid.points
    fv, gv = _values(f, pts), _values(g, pts)
    edge = grid.boundary_mask()
    if max(np.max(np.abs(fv[edge])), np.max(np.abs(gv[edge]))) > tail_tol:
        warnings.warn("density not negligible at the quadrature boundary; widen the grid", TailMassWarning, stacklevel=2)
    weight = 1.0 + np.linalg.norm(pts, axis=1) ** p
    return float(np.sum(weight * np.abs(fv - gv)) * grid.cell_volume)


def dyadic_times(T: float = 1.0, count: int = 8) -> list[float]:
    """The fixed comparison times T/count, 2T/count, ..., T."""
    return [T * j / count for j in range(1, count + 1)]


def _grid_for(record: SimulationRecord, num=1601):
    cloud = record.clouds[max(record.clouds)]
    ext = float(np.max(np.abs(cloud.positions))) + 8.0 * math.sqrt(2.0 * record.grid.eps)
    if record.ic is not None:
        ext = max(ext, record.ic.extent(1e-10) + 8.0 * math.sqrt(2.0 * record.grid.eps))
    return QuadratureGrid(-ext, ext, num, record.config.dim)


@dataclass
class HolderDiagnostic:
    mode: str
    alpha: float
    pairs: list = field(default_factory=list)
    max_ratio: float = 0.0
    fit: RateFit | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "alpha": self.alpha,
            "max_ratio": self.max_ratio,
            "pairs": self.pairs,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


def holder_time_diagnostic(record: SimulationRecord, alpha: float, mode: str = "sup_norm", times=None, grid=None):
    """Ratios of density increments to their Hoelder-in-time majorants over all pairs s < t.

    * ``sup_norm``: ||l_t - l_s||_inf / (t-s)^(alpha/2)
    * ``weighted``: int (1+|x|^p)|l_t - l_s| / ((t-s)^(alpha/2) s^(-alpha/2)), s > 0
    * ``weighted_sqrt``: int (1+|x|^p)|l_t - l_s| / (t-s)^(alpha/4); needs the
      initial law's declared sqrt-weighted integral

    The fit is log(increment) against log(t - s).
    """
    if mode not in ("sup_norm", "weighted", "weighted_sqrt"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "weighted_sqrt" and (record.ic is None or record.ic.sqrt_weighted_integral is None):
        raise ValueError("weighted_sqrt mode needs an initial law with a declared sqrt-weighted integral")
    times = sorted(float(t) for t in (record.recorded_times() if times is None else times))
    if len(times) < 8:
        raise ValueError("need at least 8 recorded times")
    grid = grid or _grid_for(record)
    pts = grid.points
    p = record.config.p
    dens = {t: record.density_at(t)(pts) for t in times}
    weight = 1.0 + np.linalg.norm(pts, axis=1) ** p
    diag = HolderDiagnostic(mode=mode, alpha=alpha)
    gaps, incs = [], []
    for i, s in enumerate(times):
        for t in times[i + 1 :]:
            if mode == "weighted" and s <= 0:
                continue
            diff = np.abs(dens[t] - dens[s])
            if mode == "sup_norm":
                inc = float(diff.max())
                denom = (t - s) ** (alpha / 2)
            elif mode == "weighted":
                inc = float(np.sum(weight * diff) * grid.cell_volume)
                denom = (t - s) ** (alpha / 2) * s ** (-alpha / 2)
            else:
                inc = float(np.sum(weight * diff) * grid.cell_volume)
                denom = (t - s) ** (alpha / 4)
            ratio = inc / denom
            diag.pairs.append({"s": s, "t": t, "increment": inc, "ratio": ratio})
            if inc > 0:
                gaps.append(t - s)
                incs.append(inc)
    if not diag.pairs:
        raise ValueError("no admissible (s, t) pairs")
    diag.max_ratio = max(r["ratio"] for r in diag.pairs)
    if len(gaps) >= 3 and len(set(gaps)) >= 2:
        diag.fit = rate_fit(gaps, incs)
    return diag


@dataclass
class IncrementDiagnostic:
    p: float
    pairs: list
    fit: RateFit
    subsample_seed: int
    points: int

    def to_dict(self) -> dict:
        return {"p": self.p, "pairs": self.pairs, "fit": self.fit.to_dict(), "subsample_seed": self.subsample_seed, "points": self.points}


def wasserstein_increment_diagnostic(record: SimulationRecord, p: float | None = None, *, max_points: int = 600, seed: int = 0, times=None, min_s: float = 0.0):
    """Fit log W_p(mu_s, mu_t) against log(t - s) over recorded pairs.

    Every cloud is restricted to the same seeded subset of particle indices
    (at most ``max_points``, halved in d >= 2 to respect the exact LP cap).
    """
    p = record.config.p if p is None else p
    times = sorted(float(t) for t in (record.recorded_times() if times is None else times) if t >= min_s)
    clouds = {t: record.cloud_at(t).positions for t in times}
    N, d = next(iter(clouds.values())).shape
    k = max_points if d == 1 else max_points // 2
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(N, size=min(k, N), replace=False))
    meas = {t: EmpiricalMeasure(c[idx]) for t, c in clouds.items()}
    pairs, gaps, dists = [], [], []
    for i, s in enumerate(times):
        for t in times[i + 1 :]:
            w = wasserstein_p(p, meas[s], meas[t])
            pairs.append({"s": s, "t": t, "W": w})
            if w > 0:
                gaps.append(t - s)
                dists.append(w)
    if len(pairs) < 6:
        raise ValueError("need at least 6 (s, t) pairs")
    return IncrementDiagnostic(p, pairs, rate_fit(gaps, dists), seed, int(idx.size))


def _measures_of(source) -> list[EmpiricalMeasure]:
    if isinstance(source, SimulationRecord):
        return [source.clouds[k].measure() for k in sorted(source.clouds)]
    if isinstance(source, FPTrajectory):
        out = []
        for row in source.density:
            w = np.maximum(row, 0.0)
            out.append(EmpiricalMeasure(source.x, w / w.sum()))
        return out
    if isinstance(source, EmpiricalMeasure):
        return [source]
    return list(source)


def default_radii(source, count: int = 6) -> list[float]:
    """Geometric radii from the median to the 99.9% quantile of |x| over all times."""
    r = np.concatenate([np.linalg.norm(m.points, axis=1)[m.weights > 0] for m in _measures_of(source)])
    lo, hi = np.quantile(r, [0.5, 0.999])
    return np.geomspace(max(lo, 1e-12), hi, count).tolist()


def tail_scan(source, p: float, R_list: Sequence[float] | None = None) -> RateFit:
    """Fit log sup_t tail_mass(p, R) against log R."""
    measures = _measures_of(source)
    R_list = default_radii(measures) if R_list is None else list(R_list)
    if len(R_list) < 4 or np.any(np.diff(R_list) <= 0):
        raise ValueError("tail scan needs at least 4 increasing radii")
    tails = [max(tail_mass(p, R, m) for m in measures) for R in R_list]
    keep = [(R, v) for R, v in zip(R_list, tails) if v > 0]
    if len(keep) < 3:
        raise DegenerateFitError(f"tails vanish at all but {len(keep)} of {len(R_list)} radii")
    return rate_fit([R for R, _ in keep], [v for _, v in keep])


@dataclass
class ConvergenceResult:
    ns: list
    seeds: list
    times: list
    per_seed: list
    errors: list
    half_widths: list
    mc_floor: list
    fit: RateFit
    reference: str
    reference_self_error: float
    monotone: bool
    drift: str = ""
    grid_x: np.ndarray | None = None
    final_densities: dict = field(default_factory=dict)  # n -> seed-averaged density at T
    reference_final: np.ndarray | None = None

    def rows(self) -> list[dict]:
        out = []
        for i, n in enumerate(self.ns):
            for j, seed in enumerate(self.seeds):
                out.append({"n": n, "seed": seed, "error": self.per_seed[i][j]})
        return out

    def summary(self) -> dict:
        return {
            "drift": self.drift,
            "ns": self.ns,
            "errors": self.errors,
            "half_widths": self.half_widths,
            "mc_floor": self.mc_floor,
            "fit": self.fit.to_dict(),
            "reference": self.reference,
            "reference_self_error": self.reference_self_error,
            "monotone_above_floor": self.monotone,
        }


def _monotone_above_floor(errors, margins, floors) -> bool:
    """No error increase beyond the MC margins among errors that clear their noise floor."""
    margins = [0.0 if math.isnan(m) else m for m in margins]
    for i in range(len(errors) - 1):
        if errors[i + 1] <= floors[i + 1]:
            continue
        if errors[i + 1] > errors[i] + margins[i] + margins[i + 1]:
            return False
    return True


def _fp_reference(drift, ic, T, times, h):
    cfg = FPConfig.auto(drift, ic, T, h=h)
    return fp_solve(cfg, T, save_times=times)


def convergence_study(
    drift: DriftSpec,
    ic: InitialDensity,
    ns: Sequence[int],
    N: int,
    seeds: Sequence[int],
    reference: str = "fp_oracle",
    *,
    T: float = 1.0,
    p: float = 1.0,
    fp_h: float = 1 / 400,
    times: Sequence[float] | None = None,
    accelerator: str = "auto",
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> ConvergenceResult:
    """sup_t int (1+|x|) |l^n_t - l_t| dx for each n, with a log-log rate fit.

    For each n the densities of all seeds are averaged before the error is
    taken, so the error estimates the law of the scheme rather than one
    particle realisation. The spread of the per-seed errors gives the Monte
    Carlo half-width, and the spread of the per-seed densities around their
    average gives the noise floor ``mc_floor``.
    """
    if p != 1:
        raise ValueError("the weighted-L1 rate is stated for p = 1")
    if reference not in ("fp_oracle", "finest_n"):
        raise ValueError(f"unknown reference {reference!r}")
    if reference == "fp_oracle" and ic.dim != 1:
        raise ValueError("the Fokker-Planck reference is one-dimensional")
    ns = sorted(int(n) for n in ns)
    if len(ns) - (reference == "finest_n") < 3:
        raise ValueError("need at least 3 fitted n values (plus the finest when it is the reference)")
    seeds = list(seeds)
    times = dyadic_times(T) if times is None else sorted(float(t) for t in times)
    for n in ns:
        for t in times:
            TimeGrid(n, T).index_of(t)
    say = progress or (lambda msg: None)

    if reference == "fp_oracle":
        ref = _fp_reference(drift, ic, T, times, fp_h)
        fine = _fp_reference(drift, ic, T, times, fp_h / 2)
        x = ref.x
        grid_w = ref.h
        ref_vals = {t: ref.at(t) for t in times}
        weight = 1.0 + np.abs(x)
        self_err = max(
            float(np.sum(weight * np.abs(ref_vals[t] - np.interp(x, fine.x, fine.at(t)))) * grid_w) for t in times
        )
        say(f"reference self-error {self_err:.3g}")
    else:
        ext = ic.extent(1e-10) + drift.bound_C * T + 10.0 * math.sqrt(2.0 * T)
        grid = QuadratureGrid(-ext, ext, 4000)
        x = grid.points[:, 0]
        grid_w = grid.spacing
        weight = 1.0 + np.abs(x)
        ref_vals = None
        self_err = 0.0

    def run(n):
        avg = {t: np.zeros_like(x) for t in times}
        per_seed_dens = {t: [] for t in times}
        for seed in seeds:
            cfg = SchemeConfig(TimeGrid(n, T), N=N, seed=seed, p=p, record_times=tuple(times), accelerator=accelerator, workers=workers)
            rec = simulate(cfg, drift, ic, verify=False)
            for t in times:
                v = rec.density_at(t)(x)
                per_seed_dens[t].append(v)
                avg[t] += v / len(seeds)
            say(f"n={n} seed={seed} done")
        return avg, per_seed_dens

    def werr(a, b):
        return float(np.sum(weight * np.abs(a - b)) * grid_w)

    results = {n: run(n) for n in ns}
    if reference == "finest_n":
        n_ref = ns[-1]
        ref_vals = results[n_ref][0]
        ns = ns[:-1]

    R = len(seeds)
    errors, per_seed, halves, floors = [], [], [], []
    for n in ns:
        avg, dens = results[n]
        errors.append(max(werr(avg[t], ref_vals[t]) for t in times))
        per_seed.append([max(werr(dens[t][j], ref_vals[t]) for t in times) for j in range(R)])
        if R > 1:
            spread = float(np.std(per_seed[-1], ddof=1))
            halves.append(float(stats.t.ppf(0.975, R - 1) * spread / math.sqrt(R)))
            # L1 size of the averaged estimate's noise, from the scatter of seeds
            floors.append(max(np.mean([werr(d, avg[t]) for d in dens[t]]) * math.sqrt(R / (R - 1)) / math.sqrt(R) for t in times))
        else:
            halves.append(float("nan"))
            floors.append(float("nan"))

    if reference == "fp_oracle" and self_err > min(errors) / 3:
        raise ReferenceBudgetError(
            "reference resolution insufficient",
            {"reference_self_error": self_err, "smallest_scheme_error": min(errors), "fp_h": fp_h},
        )
    fit = rate_fit(ns, errors)
    monotone = _monotone_above_floor(errors, halves, floors)
    return ConvergenceResult(
        ns=ns,
        seeds=seeds,
        times=list(times),
        per_seed=per_seed,
        errors=errors,
        half_widths=halves,
        mc_floor=floors,
        fit=fit,
        reference=reference,
        reference_self_error=self_err,
        monotone=monotone,
        drift=drift.name,
        grid_x=x,
        final_densities={n: results[n][0][times[-1]] for n in sorted(results)},
        reference_final=ref_vals[times[-1]],
    )
