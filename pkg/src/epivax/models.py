"""Host-vector dengue model family with vaccination.

Humans move through S, V, I, R and mosquitoes through an aquatic phase A
and adult S, I classes.  All four vaccination schemes share one vector field
with the scheme parameters switched on or off:

* pediatric: a fraction ``p`` of newborns enters V directly,
* mass (perfect): susceptibles are vaccinated at rate ``psi``,
* mass (imperfect): vaccinated hosts are infected at ``sigma`` times the
  susceptible force of infection,
* mass (waning): vaccine immunity is lost at rate ``theta``.

The controlled six-state model has no V class; vaccination moves hosts
straight to R and waning acts on ``theta * u * R``.

States are kept in absolute counts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from numba import njit

from .errors import ContractError, ViabilityError
from .ode import DEFAULT_STEP, TimeGrid, Trajectory, integrate

STATE_NAMES = ("S_h", "V_h", "I_h", "R_h", "A_m", "S_m", "I_m")
HUMAN = slice(0, 4)


@dataclass(frozen=True)
class EpiParams:
    N_h: float
    B: float
    beta_mh: float
    beta_hm: float
    mu_h: float
    eta_h: float
    mu_m: float
    phi: float
    mu_A: float
    eta_A: float
    m: float
    k: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)) or isinstance(v, bool):
                raise ContractError(f"{f.name}: expected a finite number, got {v!r}")
            if v <= 0 and f.name not in ("beta_mh", "beta_hm"):
                raise ContractError(f"{f.name}: must be positive, got {v}")
        for name in ("beta_mh", "beta_hm"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name}: transmission probability must lie in [0, 1], got {v}")

    @property
    def viable(self) -> bool:
        """True when the mosquito population has a positive equilibrium."""
        return self.phi * self.eta_A > (self.eta_A + self.mu_A) * self.mu_m

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SysState:
    S_h: float
    V_h: float
    I_h: float
    R_h: float
    A_m: float
    S_m: float
    I_m: float

    @classmethod
    def from_array(cls, y) -> "SysState":
        return cls(*(float(v) for v in y))

    def as_array(self) -> np.ndarray:
        return np.array([self.S_h, self.V_h, self.I_h, self.R_h, self.A_m, self.S_m, self.I_m])

    @property
    def humans(self) -> float:
        return self.S_h + self.V_h + self.I_h + self.R_h

    def validate(self, params: EpiParams, rel_tol: float = 1e-9) -> "SysState":
        for name in STATE_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ContractError(f"{name}: compartments must be finite and non-negative, got {v}")
        if abs(self.humans - params.N_h) > rel_tol * params.N_h:
            raise ContractError(
                f"S_h + V_h + I_h + R_h = {self.humans:g} differs from N_h = {params.N_h:g}")
        if self.A_m > params.k * params.N_h * (1 + rel_tol):
            raise ContractError(f"A_m: {self.A_m:g} exceeds carrying capacity k*N_h")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# -- vaccination strategies -------------------------------------------------

def _fraction(name, v):
    if not 0.0 <= v <= 1.0:
        raise ContractError(f"{name}: must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class NoVaccine:
    tag = "none"

    def rates(self):
        return 0.0, 0.0, 0.0, 0.0


@dataclass(frozen=True)
class Pediatric:
    p: float
    tag = "pediatric"

    def __post_init__(self):
        _fraction("p", self.p)

    def rates(self):
        return self.p, 0.0, 0.0, 0.0


@dataclass(frozen=True)
class MassPerfect:
    psi: float
    tag = "mass"

    def __post_init__(self):
        _fraction("psi", self.psi)

    def rates(self):
        return 0.0, self.psi, 0.0, 0.0


@dataclass(frozen=True)
class MassImperfect:
    psi: float
    sigma: float
    tag = "imperfect"

    def __post_init__(self):
        _fraction("psi", self.psi)
        _fraction("sigma", self.sigma)

    def rates(self):
        return 0.0, self.psi, self.sigma, 0.0


@dataclass(frozen=True)
class MassWaning:
    psi: float
    theta: float
    tag = "waning"

    def __post_init__(self):
        _fraction("psi", self.psi)
        if not (math.isfinite(self.theta) and self.theta >= 0):
            raise ContractError(f"theta: waning rate must be >= 0, got {self.theta}")

    def rates(self):
        return 0.0, self.psi, 0.0, self.theta


STRATEGIES = {cls.tag: cls for cls in (NoVaccine, Pediatric, MassPerfect, MassImperfect, MassWaning)}


@dataclass(frozen=True)
class Scenario:
    params: EpiParams
    initial: SysState
    strategy: object = NoVaccine()
    horizon: float = 365.0
    label: str = ""

    def __post_init__(self):
        self.initial.validate(self.params)
        if not self.horizon > 0:
            raise ContractError(f"horizon: must be positive, got {self.horizon}")

    def with_strategy(self, strategy) -> "Scenario":
        return replace(self, strategy=strategy)


# -- vector fields ----------------------------------------------------------

@njit(cache=True)
def svir_field(t, y, rates, par):
    """Unified field of the vaccination models on a 7-vector of counts."""
    p, psi, sigma, theta = rates[0], rates[1], rates[2], rates[3]
    N, B, bmh, bhm, mu_h, eta_h, mu_m, phi, mu_A, eta_A, m, k = (
        par[0], par[1], par[2], par[3], par[4], par[5], par[6], par[7], par[8], par[9], par[10], par[11])
    S, V, I, R, A, Sm, Im = y[0], y[1], y[2], y[3], y[4], y[5], y[6]
    force_h = B * bmh * Im / N
    force_m = B * bhm * I / N
    dy = np.empty(7)
    dy[0] = (1.0 - p) * mu_h * N + theta * V - (force_h + psi + mu_h) * S
    dy[1] = p * mu_h * N + psi * S - (sigma * force_h + theta + mu_h) * V
    dy[2] = force_h * (S + sigma * V) - (eta_h + mu_h) * I
    dy[3] = eta_h * I - mu_h * R
    dy[4] = phi * (1.0 - A / (k * N)) * (Sm + Im) - (eta_A + mu_A) * A
    dy[5] = eta_A * A - (force_m + mu_m) * Sm
    dy[6] = force_m * Sm - mu_m * Im
    return dy


@njit(cache=True)
def controlled_field(t, y, u, theta, par):
    """Six-state field with vaccination control ``u`` (V slot held at zero)."""
    N, B, bmh, bhm, mu_h, eta_h, mu_m, phi, mu_A, eta_A, m, k = (
        par[0], par[1], par[2], par[3], par[4], par[5], par[6], par[7], par[8], par[9], par[10], par[11])
    S, I, R, A, Sm, Im = y[0], y[2], y[3], y[4], y[5], y[6]
    force_h = B * bmh * Im / N
    force_m = B * bhm * I / N
    dy = np.zeros(7)
    dy[0] = mu_h * N - (force_h + mu_h + u) * S + theta * u * R
    dy[2] = force_h * S - (eta_h + mu_h) * I
    dy[3] = eta_h * I + u * S - (theta * u + mu_h) * R
    dy[4] = phi * (1.0 - A / (k * N)) * (Sm + Im) - (eta_A + mu_A) * A
    dy[5] = eta_A * A - (force_m + mu_m) * Sm
    dy[6] = force_m * Sm - mu_m * Im
    return dy


def _vec(s):
    if isinstance(s, SysState):
        return s.as_array()
    y = np.asarray(s, dtype=float)
    if y.shape != (7,):
        raise ContractError(f"state must have 7 components, got shape {y.shape}")
    return y


def _field(s, params, p=0.0, psi=0.0, sigma=0.0, theta=0.0):
    return svir_field(0.0, _vec(s), np.array([p, psi, sigma, theta], dtype=float), params.as_array())


def rhs_pediatric(s, p: float, params: EpiParams) -> np.ndarray:
    _fraction("p", p)
    return _field(s, params, p=p)


def rhs_mass_perfect(s, psi: float, params: EpiParams) -> np.ndarray:
    _fraction("psi", psi)
    return _field(s, params, psi=psi)


def rhs_mass_imperfect(s, psi: float, sigma: float, params: EpiParams) -> np.ndarray:
    _fraction("psi", psi)
    _fraction("sigma", sigma)
    return _field(s, params, psi=psi, sigma=sigma)


def rhs_mass_waning(s, psi: float, theta: float, params: EpiParams) -> np.ndarray:
    _fraction("psi", psi)
    if theta < 0:
        raise ContractError(f"theta: waning rate must be >= 0, got {theta}")
    return _field(s, params, psi=psi, theta=theta)


def rhs_controlled(s, u: float, theta: float, params: EpiParams) -> np.ndarray:
    """Derivatives of the controlled model, returned in the 7-slot layout."""
    _fraction("u", u)
    y = _vec(s)
    if y[1] != 0.0:
        raise ContractError("the controlled model has no V_h class; V_h must be 0")
    return controlled_field(0.0, y, float(u), float(theta), params.as_array())


def strategy_field(strategy):
    """Field and extra args for integrating a scenario under ``strategy``."""
    return svir_field, (np.array(strategy.rates(), dtype=float),)


def disease_free_equilibrium(params: EpiParams, p: float = 0.0) -> SysState:
    if not params.viable:
        raise ViabilityError(
            "phi*eta_A must exceed (eta_A + mu_A)*mu_m for a positive mosquito equilibrium")
    _fraction("p", p)
    N = params.N_h
    A = (1.0 - (params.eta_A + params.mu_A) * params.mu_m / (params.phi * params.eta_A)) * params.k * N
    return SysState(S_h=(1.0 - p) * N, V_h=p * N, I_h=0.0, R_h=0.0,
                    A_m=A, S_m=params.eta_A / params.mu_m * A, I_m=0.0)


# -- presets ------------------------------------------------------------------

_COMMON = dict(N_h=480000.0, mu_h=1.0 / (71 * 365), eta_h=1.0 / 3, mu_m=1.0 / 10,
               phi=6.0, mu_A=1.0 / 4, eta_A=0.08, m=3.0, k=3.0)

PRESETS = {
    "epidemic": (
        EpiParams(B=0.8, beta_mh=0.375, beta_hm=0.375, **_COMMON),
        SysState(S_h=479990.0, V_h=0.0, I_h=10.0, R_h=0.0, A_m=1440000.0, S_m=1440000.0, I_m=0.0),
    ),
    "endemic": (
        EpiParams(B=0.75, beta_mh=0.21, beta_hm=0.21, **_COMMON),
        SysState(S_h=379990.0, V_h=0.0, I_h=10.0, R_h=100000.0, A_m=1440000.0, S_m=1440000.0, I_m=0.0),
    ),
}


def preset_scenario(name: str) -> Scenario:
    try:
        params, initial = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return Scenario(params=params, initial=initial, strategy=NoVaccine(), horizon=365.0, label=name)


def simulate(scenario: Scenario, step: float = DEFAULT_STEP, method: str = "rk4") -> Trajectory:
    """Integrate a scenario over its horizon on a uniform grid of spacing ``step``."""
    grid = TimeGrid.from_step(0.0, scenario.horizon, step)
    rhs, args = strategy_field(scenario.strategy)
    return integrate(rhs, grid, scenario.initial.as_array(), (*args, scenario.params.as_array()),
                     method=method, nonneg=(method == "rk4"), names=STATE_NAMES)
