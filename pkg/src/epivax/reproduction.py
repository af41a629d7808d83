"""Basic reproduction numbers, eradication thresholds and peak statistics."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ContractError, ViabilityError
from .models import EpiParams, MassImperfect, MassPerfect, MassWaning, NoVaccine, Pediatric
from .ode import Trajectory


class Threshold(NamedTuple):
    value: float
    subcritical: bool  # R0 <= 1 already; no vaccination needed


def r0_baseline(params: EpiParams) -> float:
    """Basic reproduction number of the host-vector model without vaccination."""
    p = params
    surplus = -p.eta_A * p.mu_m - p.mu_A * p.mu_m + p.phi * p.eta_A
    if surplus < -1e-12 * p.phi * p.eta_A:
        raise ViabilityError("mosquito population is not viable: R0 radicand is negative")
    surplus = max(surplus, 0.0)  # rounding at the viability boundary
    radicand = p.k * p.B ** 2 * p.beta_hm * p.beta_mh * surplus / (
        p.phi * (p.eta_h + p.mu_h) * p.mu_m ** 2)
    return math.sqrt(radicand)


def _check_fraction(name, v):
    if not 0.0 <= v <= 1.0:
        raise ContractError(f"{name}: must lie in [0, 1], got {v}")


def r0_pediatric(params: EpiParams, p: float) -> float:
    _check_fraction("p", p)
    return (1.0 - p) * r0_baseline(params)


def r0_mass(params: EpiParams, psi: float) -> float:
    if psi < 0:
        raise ContractError(f"psi: must be >= 0, got {psi}")
    return r0_baseline(params) * (params.mu_h / (params.mu_h + psi))


def r0_imperfect(params: EpiParams, psi: float, sigma: float) -> float:
    _check_fraction("sigma", sigma)
    return (1.0 + sigma * psi) * r0_mass(params, psi)


def r0_waning(params: EpiParams, psi: float) -> float:
    # waning does not change the invasion threshold, only the approach to it
    return r0_mass(params, psi)


def critical_pediatric_coverage(params: EpiParams) -> Threshold:
    """Smallest newborn coverage that brings R0 down to 1."""
    r0 = r0_baseline(params)
    if r0 <= 1.0:
        return Threshold(0.0, True)
    return Threshold(min(1.0, max(0.0, 1.0 - 1.0 / r0)), False)


def critical_mass_rate(params: EpiParams) -> Threshold:
    """Smallest mass-vaccination rate that brings R0 down to 1."""
    r0 = r0_baseline(params)
    if r0 <= 1.0:
        return Threshold(0.0, True)
    return Threshold((r0 - 1.0) * params.mu_h, False)


def r0_for_strategy(params: EpiParams, strategy) -> float:
    if isinstance(strategy, NoVaccine):
        return r0_baseline(params)
    if isinstance(strategy, Pediatric):
        return r0_pediatric(params, strategy.p)
    if isinstance(strategy, MassPerfect):
        return r0_mass(params, strategy.psi)
    if isinstance(strategy, MassImperfect):
        return r0_imperfect(params, strategy.psi, strategy.sigma)
    if isinstance(strategy, MassWaning):
        return r0_waning(params, strategy.psi)
    raise ContractError(f"unknown strategy {strategy!r}")


def r0_family(params: EpiParams, p: float = 0.0, psi: float = 0.0, sigma: float = 0.0) -> dict:
    """All reproduction numbers and thresholds for one parameter set."""
    pc = critical_pediatric_coverage(params)
    psic = critical_mass_rate(params)
    return {
        "R0": r0_baseline(params),
        "R0_pediatric": r0_pediatric(params, p),
        "R0_mass": r0_mass(params, psi),
        "R0_imperfect": r0_imperfect(params, psi, sigma),
        "R0_waning": r0_waning(params, psi),
        "p_c": pc.value,
        "psi_c": psic.value,
        "subcritical": pc.subcritical,
    }


def peak(trajectory: Trajectory, compartment: str = "I_h") -> tuple[float, float]:
    """Time and value of the first global maximum of ``compartment``."""
    if len(trajectory) == 0:
        raise ContractError("empty trajectory")
    series = trajectory[compartment]
    i = int(np.argmax(series))  # argmax returns the earliest index on ties
    return float(trajectory.times[i]), float(series[i])
