from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from densmv.initial_conditions import (
    BumpIC,
    GaussianIC,
    GaussianMixtureIC,
    eval_density,
    make_initial,
    sample,
)

INV_SQRT_2PI = 0.3989422804014327
MIX_AT_ZERO = 0.24197072451914334  # (2 pi)^(-1/2) e^(-1/2), mpmath


def test_standard_gaussian_at_zero():
    assert eval_density(GaussianIC(), [0.0])[0] == pytest.approx(INV_SQRT_2PI, rel=1e-15)


def test_symmetric_mixture_at_zero():
    ic = make_initial("mixture", shift=1.0, sigma=1.0)
    assert eval_density(ic, [0.0])[0] == pytest.approx(MIX_AT_ZERO, rel=1e-14)


@pytest.mark.parametrize(
    "ic",
    [GaussianIC(), GaussianIC(mean=(0.5,), sigma=0.7), make_initial("mixture", shift=1.5, sigma=0.6), BumpIC(dim=1, radius=2.0, alpha=0.4)],
)
def test_density_normalised_1d(ic):
    L = ic.extent(1e-14)
    val, _ = integrate.quad(lambda x: ic.density(np.array([x]))[0], -L, L, limit=200, points=[0.0])
    assert val == pytest.approx(1.0, abs=1e-7)


def test_density_normalised_2d():
    ic = BumpIC(dim=2, radius=1.5, alpha=0.5)
    val, _ = integrate.dblquad(lambda y, x: ic.density(np.array([[x, y]]))[0], -1.5, 1.5, -1.5, 1.5, epsabs=1e-8)
    assert val == pytest.approx(1.0, abs=1e-5)


def test_gaussian_sample_moments():
    N = 100_000
    x = sample(GaussianIC(), N, seed=1)[:, 0]
    assert abs(x.mean()) <= 3 / math.sqrt(N)
    assert abs(x.var() - 1) <= 3 * math.sqrt(2 / N)


def test_single_draw_reproducible():
    for ic in (GaussianIC(), make_initial("mixture"), BumpIC(dim=2, radius=1.0)):
        a, b = sample(ic, 1, seed=17), sample(ic, 1, seed=17)
        assert a.shape == (1, ic.dim)
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(sample(GaussianIC(), 5, 1), sample(GaussianIC(), 5, 2))


def test_mixture_sample_mean():
    N = 100_000
    x = sample(make_initial("mixture", shift=2.0, sigma=0.5), N, seed=3)[:, 0]
    assert abs(x.mean()) <= 3 * x.std() / math.sqrt(N)


def test_bump_sample_within_support_and_moments():
    ic = BumpIC(dim=1, radius=2.0, alpha=0.5)
    x = sample(ic, 200_000, seed=4)
    assert np.all(np.abs(x) <= 2.0)
    m2 = np.mean(x[:, 0] ** 2)
    assert m2 == pytest.approx(ic.moment(2.0), abs=4 * np.std(x[:, 0] ** 2) / math.sqrt(x.shape[0]))


@pytest.mark.parametrize(
    "ic",
    [GaussianIC(), GaussianIC(sigma=0.5, alpha=0.3), make_initial("mixture", shift=1.0, sigma=0.8), BumpIC(dim=1, radius=1.0, alpha=0.5)],
)
def test_declared_holder_norm_not_exceeded(ic):
    rng = np.random.default_rng(0)
    L = ic.extent(1e-8)
    x = rng.uniform(-L, L, size=(1000, 1))
    y = x + rng.normal(scale=rng.choice([1e-3, 1e-1, 1.0], size=(1000, 1)))
    fx, fy = ic.density(x), ic.density(y)
    dist = np.abs(x - y)[:, 0]
    semi = np.max(np.abs(fx - fy) / dist**ic.alpha)
    sup = max(fx.max(), fy.max())
    assert semi <= ic.holder_norm * 1.05
    assert sup + semi <= ic.holder_norm * 1.05


@pytest.mark.parametrize(
    "ic",
    [GaussianIC(), GaussianIC(mean=(1.0,), sigma=0.8), make_initial("mixture", shift=1.0), BumpIC(dim=1, radius=1.5, alpha=0.5)],
)
def test_declared_moment_matches_quadrature(ic):
    q = ic.p + ic.alpha
    L = ic.extent(1e-14)
    val, _ = integrate.quad(lambda x: abs(x) ** q * ic.density(np.array([x]))[0], -L, L, limit=200, points=[0.0])
    assert ic.moment_p_plus_alpha == pytest.approx(val, rel=1e-2)


def test_gaussian_moment_2d_noncentral():
    ic = GaussianIC(dim=2, mean=(1.0, -0.5), sigma=0.7)
    x = sample(ic, 400_000, seed=5)
    emp = np.mean(np.linalg.norm(x, axis=1) ** 1.9)
    assert ic.moment(1.9) == pytest.approx(emp, rel=1e-2)


def test_sqrt_weighted_integral_gaussian():
    ic = GaussianIC(sigma=1.3)
    val, _ = integrate.quad(lambda x: (1 + abs(x)) * math.sqrt(ic.density(np.array([x]))[0]), -40, 40, points=[0.0])
    assert ic.sqrt_weighted_integral == pytest.approx(val, rel=1e-8)


def test_validation():
    with pytest.raises(ValueError):
        GaussianIC(alpha=1.0)
    with pytest.raises(ValueError):
        GaussianIC(sigma=0.0)
    with pytest.raises(ValueError):
        sample(GaussianIC(), 0, 1)
    with pytest.raises(KeyError):
        make_initial("cauchy")
    with pytest.raises(ValueError):
        GaussianMixtureIC(components=((0.4, 0.0, 1.0), (0.4, 1.0, 1.0)))
