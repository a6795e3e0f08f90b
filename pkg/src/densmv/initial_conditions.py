"""Initial laws with closed-form densities, exact samplers and declared regularity data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gammaln
from scipy.stats import ncx2, norm

from . import _rng
from .measures import as_points

__all__ = [
    "BumpIC",
    "GaussianIC",
    "GaussianMixtureIC",
    "InitialDensity",
    "INITIAL_FAMILIES",
    "eval_density",
    "make_initial",
    "sample",
]


class InitialDensity:
    """Common interface: ``density``, ``sample`` and the declared constants."""

    dim: int
    alpha: float
    p: float

    def density(self, x) -> np.ndarray:
        raise NotImplementedError

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def moment(self, q: float) -> float:
        raise NotImplementedError

    @property
    def holder_norm(self) -> float:
        raise NotImplementedError

    @property
    def moment_p_plus_alpha(self) -> float:
        return self.moment(self.p + self.alpha)

    @property
    def sqrt_weighted_integral(self) -> float | None:
        return None

    def extent(self, tol: float = 1e-12) -> float:
        """Radius outside of which the density is below ``tol`` (roughly)."""
        raise NotImplementedError

    def sample(self, n: int, seed: int) -> np.ndarray:
        return sample(self, n, seed)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"Hoelder exponent must lie in (0, 1), got {alpha}")


def _gaussian_abs_moment(q, mean, sigma, d):
    m2 = float(np.dot(mean, mean))
    if m2 == 0.0:
        return float(sigma**q * math.exp(0.5 * q * math.log(2.0) + gammaln((d + q) / 2) - gammaln(d / 2)))
    # |X|^2 / sigma^2 is noncentral chi-square
    dist = ncx2(d, m2 / sigma**2)
    return float(sigma**q * dist.expect(lambda u: u ** (q / 2.0)))


@dataclass(frozen=True)
class GaussianIC(InitialDensity):
    """Isotropic Gaussian N(mean, sigma^2 I)."""

    dim: int = 1
    mean: tuple = ()
    sigma: float = 1.0
    alpha: float = 0.9
    p: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        m = tuple(float(v) for v in np.broadcast_to(np.asarray(self.mean or 0.0, dtype=float), (self.dim,)))
        object.__setattr__(self, "mean", m)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def _m(self):
        return np.asarray(self.mean)

    def density(self, x):
        x = as_points(x, self.dim)
        z = np.sum((x - self._m) ** 2, axis=1) / self.sigma**2
        return (2.0 * math.pi * self.sigma**2) ** (-self.dim / 2) * np.exp(-0.5 * z)

    def draw(self, n, rng):
        return self._m + self.sigma * rng.standard_normal((n, self.dim))

    def moment(self, q):
        return _gaussian_abs_moment(q, self._m, self.sigma, self.dim)

    @property
    def holder_norm(self):
        # |f(x) - f(y)| <= min(L |x-y|, M) <= L^a M^(1-a) |x-y|^a
        M = (2.0 * math.pi * self.sigma**2) ** (-self.dim / 2)
        L = M * math.exp(-0.5) / self.sigma
        return M + L**self.alpha * M ** (1.0 - self.alpha)

    @property
    def sqrt_weighted_integral(self):
        # sqrt of the density is a multiple of the N(mean, 2 sigma^2) density
        s2 = self.sigma**2
        scale = (2.0 * math.pi * s2) ** (-self.dim / 4) * (4.0 * math.pi * s2) ** (self.dim / 2)
        return scale * (1.0 + _gaussian_abs_moment(self.p, self._m, math.sqrt(2.0) * self.sigma, self.dim))

    def extent(self, tol=1e-12):
        return float(np.linalg.norm(self._m)) + self.sigma * float(norm.isf(tol)) * math.sqrt(self.dim)


@dataclass(frozen=True)
class GaussianMixtureIC(InitialDensity):
    """sum_k w_k N(m_k, s_k^2 I)."""

    components: tuple = field(default_factory=tuple)
    alpha: float = 0.9
    p: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.components:
            raise ValueError("mixture needs at least one component")
        comps = tuple(
            (float(w), GaussianIC(dim=len(np.atleast_1d(m)), mean=tuple(np.atleast_1d(m)), sigma=s, alpha=self.alpha, p=self.p))
            for w, m, s in self.components
        )
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total}")
        if len({g.dim for _, g in comps}) != 1:
            raise ValueError("mixture components differ in dimension")
        object.__setattr__(self, "_comps", comps)

    @property
    def dim(self):
        return self._comps[0][1].dim

    def density(self, x):
        return sum(w * g.density(x) for w, g in self._comps)

    def draw(self, n, rng):
        weights = np.array([w for w, _ in self._comps])
        which = rng.choice(len(weights), size=n, p=weights)
        z = rng.standard_normal((n, self.dim))
        means = np.array([g.mean for _, g in self._comps])
        sig = np.array([g.sigma for _, g in self._comps])
        return means[which] + sig[which, None] * z

    def moment(self, q):
        return sum(w * g.moment(q) for w, g in self._comps)

    @property
    def holder_norm(self):
        return sum(w * g.holder_norm for w, g in self._comps)

    @property
    def sqrt_weighted_integral(self):
        # upper bound from sqrt(sum a_k) <= sum sqrt(a_k)
        return sum(math.sqrt(w) * g.sqrt_weighted_integral for w, g in self._comps)

    def extent(self, tol=1e-12):
        return max(g.extent(tol) for _, g in self._comps)


@dataclass(frozen=True)
class BumpIC(InitialDensity):
    """c (1 - |x|^2 / R^2)_+^alpha: Hoelder-alpha at the edge of its support."""

    dim: int = 1
    radius: float = 1.0
    alpha: float = 0.5
    p: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def _c(self):
        d, a = self.dim, self.alpha
        log_mass = 0.5 * d * math.log(math.pi) + gammaln(a + 1) - gammaln(a + 1 + d / 2) + d * math.log(self.radius)
        return math.exp(-log_mass)

    def density(self, x):
        x = as_points(x, self.dim)
        s = 1.0 - np.sum(x * x, axis=1) / self.radius**2
        return self._c * np.where(s > 0, np.maximum(s, 0.0) ** self.alpha, 0.0)

    def draw(self, n, rng):
        u = rng.beta(self.dim / 2, self.alpha + 1, size=n)
        v = rng.standard_normal((n, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.radius * np.sqrt(u)[:, None] * v

    def _radial_integral(self, q, expo):
        # int_{|x|<R} |x|^q (1 - |x|^2/R^2)^expo dx
        d = self.dim
        surface = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
        return surface * self.radius ** (q + d) * 0.5 * beta_fn((q + d) / 2, expo + 1)

    def moment(self, q):
        return self._c * self._radial_integral(q, self.alpha)

    @property
    def holder_norm(self):
        # t -> t^a is a-Hoelder with constant 1 and |(|x|^2 - |y|^2)| <= 2R |x - y| on the ball
        return self._c * (1.0 + (2.0 / self.radius) ** self.alpha)

    @property
    def sqrt_weighted_integral(self):
        e = self.alpha / 2
        return math.sqrt(self._c) * (self._radial_integral(0.0, e) + self._radial_integral(self.p, e))

    def extent(self, tol=1e-12):
        return self.radius


INITIAL_FAMILIES = {
    "gaussian": GaussianIC,
    "mixture": GaussianMixtureIC,
    "bump": BumpIC,
}


def make_initial(family: str, **params) -> InitialDensity:
    if family == "mixture" and "components" not in params:
        # convenience form: symmetric pair +/- shift with common sigma
        shift = float(params.pop("shift", 1.0))
        sigma = float(params.pop("sigma", 1.0))
        params["components"] = ((0.5, -shift, sigma), (0.5, shift, sigma))
    if family == "gaussian" and "mean" in params:
        params["mean"] = tuple(np.atleast_1d(params["mean"]))
    try:
        cls = INITIAL_FAMILIES[family]
    except KeyError:
        raise KeyError(f"unknown initial family {family!r}; choose from {sorted(INITIAL_FAMILIES)}") from None
    return cls(**params)


def sample(ic: InitialDensity, n: int, seed: int) -> np.ndarray:
    """n exact i.i.d. draws from ic, shape (n, d); reproducible per seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    return ic.draw(n, _rng.substream(seed, _rng.INITIAL))


def eval_density(ic: InitialDensity, x) -> np.ndarray:
    return ic.density(x)
