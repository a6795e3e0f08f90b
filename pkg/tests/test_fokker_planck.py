from __future__ import annotations

import math

import numpy as np
import pytest

from densmv.analysis import weighted_l1_error
from densmv.drift_models import burgers_clamp, constant_drift, mixed_drift, zero_drift
from densmv.fokker_planck import CFLError, DomainTooSmallError, FPConfig, fp_measures, fp_solve
from densmv.initial_conditions import GaussianIC


def heat_exact(t, shift=0.0):
    v = 1 + 2 * t
    return lambda x: np.exp(-((x - shift) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)


def solve(drift, h, dt, T, ic=GaussianIC(), **kw):
    base = FPConfig.auto(drift, ic, T, h=h)
    return fp_solve(FPConfig(base.L, h, dt, drift, ic, **kw), T)


def test_heat_solution_close():
    tr = solve(zero_drift(), 0.02, 0.005, 0.5)
    assert np.max(np.abs(tr.at(0.5) - heat_exact(0.5)(tr.x))) < 5e-4


def test_constant_drift_translates():
    c, T = 1.0, 0.5
    tr = solve(constant_drift(c), 0.01, 0.0025, T)
    # first-order upwinding adds numerical diffusion c h / 2
    err = np.max(np.abs(tr.at(T) - heat_exact(T, c * T)(tr.x)))
    assert err < 2e-3
    fine = solve(constant_drift(c), 0.005, 0.00125, T)
    err_fine = np.max(np.abs(fine.at(T) - heat_exact(T, c * T)(fine.x)))
    assert err_fine < 0.6 * err


@pytest.mark.parametrize("drift", [zero_drift(), burgers_clamp(), mixed_drift()])
def test_mass_conserved(drift):
    tr = solve(drift, 0.02, 0.005, 1.0)
    np.testing.assert_allclose(tr.mass, 1.0, atol=1e-8)
    assert tr.clipped_mass == 0.0


def test_save_times_hit_exactly():
    cfg = FPConfig.auto(burgers_clamp(), GaussianIC(), 1.0, h=0.05)
    tr = fp_solve(cfg, 1.0, save_times=[0.125, 1 / 3, 0.5])
    np.testing.assert_allclose(tr.times, [0, 0.125, 1 / 3, 0.5, 1.0])
    with pytest.raises(ValueError):
        tr.at(0.2)


def test_spatial_order_two():
    T, dt = 0.25, 2e-5
    errs = [np.max(np.abs((tr := solve(zero_drift(), h, dt, T)).at(T) - heat_exact(T)(tr.x))) for h in (0.2, 0.1)]
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)


def test_temporal_order_one():
    T, h = 0.5, 0.01
    errs = [np.max(np.abs((tr := solve(zero_drift(), h, dt, T)).at(T) - heat_exact(T)(tr.x))) for dt in (0.04, 0.02, 0.01)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(abs(o - 1.0) < 0.15 for o in orders)


def test_cfl_checked():
    with pytest.raises(CFLError):
        FPConfig(10.0, 0.01, 0.1, burgers_clamp(), GaussianIC())
    with pytest.raises(CFLError):
        FPConfig(10.0, 0.1, 0.01, zero_drift(), GaussianIC(), mode="explicit")


def test_explicit_mode_agrees():
    a = solve(burgers_clamp(), 0.05, 0.0005, 0.5, mode="explicit")
    b = solve(burgers_clamp(), 0.05, 0.0005, 0.5)
    assert np.max(np.abs(a.at(0.5) - b.at(0.5))) < 1e-3


def test_domain_too_small():
    cfg = FPConfig(3.0, 0.05, 0.01, zero_drift(), GaussianIC())
    with pytest.raises(DomainTooSmallError):
        fp_solve(cfg, 1.0)


def test_only_one_dimension():
    with pytest.raises(ValueError):
        FPConfig(5.0, 0.1, 0.01, zero_drift(), GaussianIC(dim=2))


def test_measures_of_heat_solution():
    T = 0.5
    tr = solve(zero_drift(), 0.01, 0.0025, T)
    m = fp_measures(tr, T, radii=(1.0, 2.0, 3.0))
    assert m.moments[0.0] == pytest.approx(1.0, abs=1e-10)
    assert m.moments[2.0] == pytest.approx(1 + 2 * T, abs=2e-3)
    # closed-form p = 1 tail of N(0, v): 2 sqrt(v / 2pi) exp(-R^2 / 2v)
    v = 1 + 2 * T
    for R, val in m.tails.items():
        assert val == pytest.approx(2 * math.sqrt(v / (2 * math.pi)) * math.exp(-R * R / (2 * v)), rel=5e-3)


def test_burgers_resolution_doubling():
    a = fp_solve(FPConfig.auto(burgers_clamp(), GaussianIC(), 1.0, h=1 / 100), 1.0)
    b = fp_solve(FPConfig.auto(burgers_clamp(), GaussianIC(), 1.0, h=1 / 200), 1.0)
    diff = weighted_l1_error(a.evaluator(1.0), b.evaluator(1.0), 1.0, grid=None)
    assert diff < 2e-3


def test_trajectory_csv(tmp_path):
    tr = solve(zero_drift(), 0.1, 0.01, 0.2)
    tr.to_csv(tmp_path / "fp.csv")
    data = np.loadtxt(tmp_path / "fp.csv", delimiter=",", skiprows=1)
    assert data.shape == (2, tr.x.size + 1)
    assert '"h": 0.1' in tr.config_json()
