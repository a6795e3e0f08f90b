"""Discrete probability measures, moments, tails and exact Wasserstein distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

__all__ = [
    "EmpiricalMeasure",
    "TransportPlan",
    "TooLargeForExactError",
    "as_points",
    "moment",
    "tail_mass",
    "wasserstein_p",
]

LP_CAP = 600


class TooLargeForExactError(ValueError):
    """Raised when an exact multi-dimensional transport problem exceeds the LP cap."""


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to an (N, d) float array.

    A 1D array means N scalar points when ``dim`` is 1 or unknown, and a single
    point when ``dim`` equals its length (d > 1).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        if dim is not None and dim > 1:
            if x.size != dim:
                raise ValueError(f"point of length {x.size} in dimension {dim}")
            return x[None, :]
        return x[:, None]
    if x.ndim != 2:
        raise ValueError(f"points must be (N, d), got shape {x.shape}")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"points have dimension {x.shape[1]}, expected {dim}")
    return x


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point set sum_i w_i delta_{x_i}; weights default to 1/N."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = as_points(self.points)
        if pts.shape[0] == 0:
            raise ValueError("empirical measure needs at least one point")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != pts.shape[0]:
                raise ValueError("weights and points differ in length")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def moment(self, p: float) -> float:
        return moment(p, self)

    def tail_mass(self, p: float, R: float) -> float:
        return tail_mass(p, R, self)

    def subsample(self, k: int, seed: int) -> EmpiricalMeasure:
        """At most ``k`` points drawn without replacement with probability ~ weight."""
        if self.size <= k:
            return self
        rng = np.random.default_rng(seed)
        p = None if self.is_uniform() else self.weights
        idx = np.sort(rng.choice(self.size, size=k, replace=False, p=p))
        return EmpiricalMeasure(self.points[idx])

    def to_csv(self, path, with_weights: bool = True) -> None:
        header = [f"x{i}" for i in range(self.dim)] + (["weight"] if with_weights else [])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for pt, w in zip(self.points, self.weights):
                row = [repr(float(v)) for v in pt]
                if with_weights:
                    row.append(repr(float(w)))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> EmpiricalMeasure:
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[-1] == "weight":
            w = body[:, -1]
            return cls(body[:, :-1], w / w.sum())
        return cls(body)


@dataclass
class TransportPlan:
    source: np.ndarray
    target: np.ndarray
    mass: np.ndarray
    cost: float
    p: float = 1.0
    shape: tuple[int, int] = field(default=(0, 0))

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.bincount(self.source, weights=self.mass, minlength=self.shape[0])
        b = np.bincount(self.target, weights=self.mass, minlength=self.shape[1])
        return a, b


def moment(p: float, mu: EmpiricalMeasure) -> float:
    """M_p(mu) = sum_i w_i |x_i|^p."""
    r = np.linalg.norm(mu.points, axis=1)
    return float(mu.weights @ r**p)


def tail_mass(p: float, R: float, mu: EmpiricalMeasure) -> float:
    """sum over |x_i| > R of w_i |x_i|^p; p = 0 gives mu(B_R^c)."""
    if R <= 0:
        raise ValueError("tail radius must be positive")
    r = np.linalg.norm(mu.points, axis=1)
    mask = r > R
    return float(mu.weights[mask] @ r[mask] ** p)


def _wasserstein_1d(p, mu, nu):
    xs, xt = mu.points[:, 0], nu.points[:, 0]
    i_s = np.argsort(xs, kind="stable")
    i_t = np.argsort(xt, kind="stable")
    cs = np.cumsum(mu.weights[i_s])
    ct = np.cumsum(nu.weights[i_t])
    cs[-1] = ct[-1] = 1.0
    qs = np.unique(np.concatenate([[0.0], cs, ct]))
    qs = qs[qs <= 1.0]
    mass = np.diff(qs)
    mid = 0.5 * (qs[1:] + qs[:-1])
    a = np.minimum(np.searchsorted(cs, mid), len(cs) - 1)
    b = np.minimum(np.searchsorted(ct, mid), len(ct) - 1)
    keep = mass > 0
    src, tgt, mass = i_s[a[keep]], i_t[b[keep]], mass[keep]
    cost = float(mass @ np.abs(xs[src] - xt[tgt]) ** p)
    return cost, TransportPlan(src, tgt, mass, cost, p, (mu.size, nu.size))


def _wasserstein_lp(p, mu, nu):
    C = cdist(mu.points, nu.points) ** p
    n, m = C.shape
    if n == m and mu.is_uniform() and nu.is_uniform():
        # Birkhoff: an optimal plan is a permutation
        r, c = linear_sum_assignment(C)
        mass = np.full(n, 1.0 / n)
        cost = float(C[r, c].sum() / n)
        return cost, TransportPlan(r, c, mass, cost, p, (n, m))
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(C.ravel(), A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    flow = res.x.reshape(n, m)
    r, c = np.nonzero(flow > 0)
    cost = float(C.ravel() @ res.x)
    return cost, TransportPlan(r, c, flow[r, c], cost, p, (n, m))


def wasserstein_p(
    p: float,
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    *,
    return_plan: bool = False,
    lp_cap: int = LP_CAP,
    method: str = "auto",
):
    """Exact W_p between two discrete measures.

    1D uses the sorted quantile coupling (any size); higher dimensions solve
    the transport LP exactly and refuse instances with more than ``lp_cap``
    support points in total. ``method="lp"`` forces the LP in 1D as well.
    """
    if p < 1:
        raise ValueError("W_p needs p >= 1")
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if method not in ("auto", "lp"):
        raise ValueError(f"unknown method {method!r}")
    if mu.dim == 1 and method == "auto":
        cost, plan = _wasserstein_1d(p, mu, nu)
    else:
        if mu.size + nu.size > lp_cap:
            raise TooLargeForExactError(
                f"{mu.size}+{nu.size} points exceed the exact LP cap of {lp_cap}; subsample first"
            )
        cost, plan = _wasserstein_lp(p, mu, nu)
    w = max(cost, 0.0) ** (1.0 / p)
    return (w, plan) if return_plan else w
