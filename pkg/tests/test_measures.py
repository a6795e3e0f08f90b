from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from densmv.measures import (
    EmpiricalMeasure,
    TooLargeForExactError,
    as_points,
    moment,
    tail_mass,
    wasserstein_p,
)


def brute_lp(p, x, a, y, b):
    """Independent dense LP over all couplings (test oracle)."""
    C = np.abs(x[:, None] - y[None, :]) ** p if x.ndim == 1 else np.linalg.norm(x[:, None] - y[None], axis=-1) ** p
    n, m = C.shape
    A = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i] = 1
        A.append(row.ravel())
    for j in range(m):
        col = np.zeros((n, m))
        col[:, j] = 1
        A.append(col.ravel())
    res = linprog(C.ravel(), A_eq=np.array(A), b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs-ipm")
    return res.fun ** (1 / p)


def random_measure(rng, n, d=1, uniform=False):
    pts = rng.normal(size=(n, d))
    w = None if uniform else rng.dirichlet(np.ones(n))
    return EmpiricalMeasure(pts, w)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 1)), np.array([1.5, -0.5]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((0, 1)))


def test_as_points_conventions():
    assert as_points([1.0, 2.0, 3.0]).shape == (3, 1)
    assert as_points([1.0, 2.0], dim=2).shape == (1, 2)
    with pytest.raises(ValueError):
        as_points(np.zeros((2, 3)), dim=2)


@pytest.mark.parametrize("a,b", [(0.0, 3.0), (-1.5, 2.0), (4.0, 4.0)])
def test_diracs(a, b):
    for p in (1.0, 2.0, 3.5):
        assert wasserstein_p(p, EmpiricalMeasure([a]), EmpiricalMeasure([b])) == pytest.approx(abs(a - b))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_translation_p1(d):
    rng = np.random.default_rng(d)
    mu = random_measure(rng, 30, d)
    v = rng.normal(size=d)
    nu = EmpiricalMeasure(mu.points + v, mu.weights)
    assert wasserstein_p(1, mu, nu) == pytest.approx(np.linalg.norm(v), rel=1e-9)


def test_symmetric_pair_example():
    mu = EmpiricalMeasure([0.0, 0.0])
    nu = EmpiricalMeasure([-1.0, 1.0])
    assert wasserstein_p(1, mu, nu) == pytest.approx(1.0)
    assert brute_lp(1, np.zeros(2), np.full(2, 0.5), np.array([-1.0, 1.0]), np.full(2, 0.5)) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_quantile_coupling_matches_lp(seed, p):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 50, size=2)
    mu, nu = random_measure(rng, n), random_measure(rng, m)
    exact = brute_lp(p, mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights)
    assert wasserstein_p(p, mu, nu) == pytest.approx(exact, abs=1e-9)
    assert wasserstein_p(p, mu, nu, method="lp") == pytest.approx(exact, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_multidim_matches_lp_and_plan_marginals(seed):
    rng = np.random.default_rng(100 + seed)
    mu, nu = random_measure(rng, 17, 2), random_measure(rng, 23, 2)
    w, plan = wasserstein_p(2, mu, nu, return_plan=True)
    exact = brute_lp(2, mu.points, mu.weights, nu.points, nu.weights)
    assert w == pytest.approx(exact, abs=1e-9)
    a, b = plan.marginals()
    np.testing.assert_allclose(a, mu.weights, atol=1e-9)
    np.testing.assert_allclose(b, nu.weights, atol=1e-9)


def test_uniform_equal_size_assignment():
    rng = np.random.default_rng(7)
    mu, nu = random_measure(rng, 40, 3, uniform=True), random_measure(rng, 40, 3, uniform=True)
    w, plan = wasserstein_p(1, mu, nu, return_plan=True)
    assert w == pytest.approx(brute_lp(1, mu.points, mu.weights, nu.points, nu.weights), abs=1e-9)
    a, b = plan.marginals()
    np.testing.assert_allclose(a, mu.weights, atol=1e-12)


def test_1d_plan_marginals():
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 31), random_measure(rng, 12)
    _, plan = wasserstein_p(1, mu, nu, return_plan=True)
    a, b = plan.marginals()
    np.testing.assert_allclose(a, mu.weights, atol=1e-9)
    np.testing.assert_allclose(b, nu.weights, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    m1, m2, m3 = (random_measure(rng, int(rng.integers(2, 50)), d) for _ in range(3))
    for p in (1.0, 2.0):
        assert wasserstein_p(p, m1, m1) == pytest.approx(0.0, abs=1e-9)
        assert wasserstein_p(p, m1, m2) == pytest.approx(wasserstein_p(p, m2, m1), abs=1e-9)
        assert wasserstein_p(p, m1, m3) <= wasserstein_p(p, m1, m2) + wasserstein_p(p, m2, m3) + 1e-9


@given(st.integers(0, 10_000))
def test_monotone_in_p(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 20), random_measure(rng, 15)
    ws = [wasserstein_p(p, mu, nu) for p in (1.0, 1.5, 2.0, 3.0)]
    assert all(a <= b + 1e-12 for a, b in zip(ws, ws[1:]))


def test_tie_invariance():
    mu = EmpiricalMeasure([0.0, 0.0, 1.0, 1.0])
    nu = EmpiricalMeasure([1.0, 0.0, 1.0, 0.0])
    assert wasserstein_p(1, mu, nu) == 0.0


def test_lp_cap_enforced():
    rng = np.random.default_rng(0)
    mu, nu = random_measure(rng, 400, 2), random_measure(rng, 300, 2)
    with pytest.raises(TooLargeForExactError):
        wasserstein_p(1, mu, nu)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        wasserstein_p(1, EmpiricalMeasure(np.zeros((2, 1))), EmpiricalMeasure(np.zeros((2, 2))))


def test_moment_examples():
    assert moment(3.0, EmpiricalMeasure([0.0])) == 0.0
    assert moment(1.0, EmpiricalMeasure([-1.0, 1.0])) == 1.0


def test_moment_of_normal_sample():
    N = 100_000
    x = np.random.default_rng(42).standard_normal(N)
    assert abs(moment(2.0, EmpiricalMeasure(x)) - 1.0) <= 3 * math.sqrt(2 / N)


def test_tail_mass_examples():
    mu = EmpiricalMeasure([0.0, 2.0])
    assert tail_mass(1.0, 1.0, mu) == 1.0
    assert tail_mass(1.0, 2.5, mu) == 0.0
    with pytest.raises(ValueError):
        tail_mass(1.0, 0.0, mu)


def test_normal_tail_probability():
    N = 100_000
    x = np.random.default_rng(9).standard_normal(N)
    q = 0.04999579029644087  # P(|Z| > 1.96)
    assert abs(tail_mass(0.0, 1.96, EmpiricalMeasure(x)) - q) <= 3 * math.sqrt(q * (1 - q) / N)


@given(
    arrays(np.float64, st.integers(1, 40), elements=st.floats(-50, 50)),
    st.floats(0, 3),
    st.floats(0.05, 2),
    st.floats(0.1, 20),
)
def test_markov_bound(x, p, a, R):
    mu = EmpiricalMeasure(x)
    assert tail_mass(p, R, mu) <= moment(p + a, mu) / R**a * (1 + 1e-12) + 1e-300


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    mu = random_measure(rng, 9, 2)
    mu.to_csv(tmp_path / "m.csv")
    back = EmpiricalMeasure.from_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_allclose(back.weights, mu.weights, rtol=1e-15)


def test_subsample_is_seeded():
    mu = EmpiricalMeasure(np.arange(100.0))
    a, b = mu.subsample(10, seed=4), mu.subsample(10, seed=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.size == 10 and a.is_uniform()
