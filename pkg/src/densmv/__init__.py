"""Euler-Maruyama particle scheme with a first-step cutoff for McKean-Vlasov
SDEs whose drift depends on the marginal density, with independent density
oracles and a convergence harness."""

from __future__ import annotations

from .drift_models import DRIFTS, DriftSpec, ProbeConfig, make_drift, verify_assumptions
from .em_scheme import DensityEstimate, SchemeConfig, SimulationRecord, TimeGrid, simulate, step
from .initial_conditions import BumpIC, GaussianIC, GaussianMixtureIC, make_initial
from .measures import EmpiricalMeasure, wasserstein_p

__all__ = [
    "BumpIC",
    "DRIFTS",
    "DensityEstimate",
    "DriftSpec",
    "EmpiricalMeasure",
    "GaussianIC",
    "GaussianMixtureIC",
    "ProbeConfig",
    "SchemeConfig",
    "SimulationRecord",
    "TimeGrid",
    "make_drift",
    "make_initial",
    "simulate",
    "step",
    "verify_assumptions",
    "wasserstein_p",
]
