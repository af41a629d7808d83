"""Optimal vaccination control for the six-state host-vector model.

The problem is

    minimize  J[u] = integral_0^tf  gamma_D * I_h(t)**2 + gamma_V * u(t)**2  dt

over controls ``u_min <= u(t) <= u_max``, subject to the controlled model
(vaccination moves ``u*S_h`` to R_h, waning returns ``theta*u*R_h``).
Everything here runs on normalized variables: humans divided by N_h, the
aquatic phase by k*N_h and adult mosquitoes by m*N_h.  Time stays in days.

Two solvers are provided.  :func:`solve_indirect` is a forward-backward
sweep on the Pontryagin conditions; :func:`solve_direct` parameterizes the
control as piecewise constant and minimizes the simulated cost with a
projected gradient method.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import ContractError
from .models import NoVaccine, Scenario, STATE_NAMES, preset_scenario
from .ode import DEFAULT_STEP, TimeGrid, Trajectory, integrate, integrate_backward

log = logging.getLogger(__name__)

CONTROL_STATES = ("S_h", "I_h", "R_h", "A_m", "S_m", "I_m")
ADJOINT_NAMES = tuple(f"lambda_{i}" for i in range(1, 7))
# positions of the six controlled states inside the 7-slot model layout
_SLOTS = [0, 2, 3, 4, 5, 6]


@dataclass(frozen=True)
class NormalizationSpec:
    human_scale: float
    aquatic_scale: float
    adult_mosquito_scale: float

    def __post_init__(self):
        if min(self.human_scale, self.aquatic_scale, self.adult_mosquito_scale) <= 0:
            raise ContractError("normalization scales must be positive")

    @classmethod
    def for_params(cls, params) -> "NormalizationSpec":
        return cls(params.N_h, params.k * params.N_h, params.m * params.N_h)

    @classmethod
    def identity(cls) -> "NormalizationSpec":
        return cls(1.0, 1.0, 1.0)

    @property
    def scales(self) -> np.ndarray:
        """Divisors for (S_h, I_h, R_h, A_m, S_m, I_m)."""
        h, a, m = self.human_scale, self.aquatic_scale, self.adult_mosquito_scale
        return np.array([h, h, h, a, m, m])


@dataclass(frozen=True)
class ControlProblem:
    scenario: Scenario
    gamma_D: float = 0.5
    gamma_V: float = 0.5
    theta: float = 0.05
    u_min: float = 0.0
    u_max: float = 1.0
    horizon: float | None = None
    step: float = DEFAULT_STEP
    normalization: NormalizationSpec | None = None

    def __post_init__(self):
        if not (self.gamma_D > 0 and self.gamma_V > 0):
            raise ContractError("gamma_D and gamma_V must be positive")
        if not 0.0 <= self.u_min <= self.u_max <= 1.0:
            raise ContractError(f"need 0 <= u_min <= u_max <= 1, got [{self.u_min}, {self.u_max}]")
        if self.theta < 0:
            raise ContractError(f"theta: waning rate must be >= 0, got {self.theta}")
        if self.scenario.initial.V_h != 0:
            raise ContractError("the controlled model has no V_h class; initial V_h must be 0")
        if not isinstance(self.scenario.strategy, NoVaccine):
            raise ContractError("the control replaces the vaccination strategy; use NoVaccine")
        if self.horizon is None:
            object.__setattr__(self, "horizon", float(self.scenario.horizon))
        if self.normalization is None:
            object.__setattr__(self, "normalization", NormalizationSpec.for_params(self.scenario.params))

    @classmethod
    def from_preset(cls, name: str, **kw) -> "ControlProblem":
        return cls(scenario=preset_scenario(name), **kw)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_step(0.0, self.horizon, self.step)

    @property
    def params(self):
        return self.scenario.params

    def coefficients(self) -> np.ndarray:
        """Rate constants of the normalized field, packed for the kernels."""
        p = self.params
        sh, sa, sm = (self.normalization.human_scale, self.normalization.aquatic_scale,
                      self.normalization.adult_mosquito_scale)
        return np.array([
            p.mu_h * p.N_h / sh,          # 0 births
            p.mu_h,                        # 1
            p.eta_h,                       # 2
            p.B * p.beta_mh * sm / p.N_h,  # 3 force on humans per unit adult
            p.B * p.beta_hm * sh / p.N_h,  # 4 force on mosquitoes per unit human
            p.mu_m,                        # 5
            p.phi * sm / sa,               # 6 egg laying
            sa / (p.k * p.N_h),            # 7 aquatic crowding
            p.eta_A * sa / sm,             # 8 emergence
            p.eta_A + p.mu_A,              # 9 aquatic outflow
            self.theta,                    # 10
        ])

    def initial_state(self) -> np.ndarray:
        return self.scenario.initial.as_array()[_SLOTS] / self.normalization.scales


@dataclass(frozen=True)
class ControlGrid:
    """Control sampled on the state grid.

    Piecewise-constant controls also keep their ``levels`` on equal-length
    intervals; a grid point on a breakpoint carries the level of the interval
    that starts there.
    """

    times: np.ndarray
    u: np.ndarray
    levels: np.ndarray | None = None

    def __post_init__(self):
        if self.u.shape != self.times.shape:
            raise ContractError("control must have one value per grid time")

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "ControlGrid":
        return cls.piecewise(grid, np.array([value], dtype=float))

    @classmethod
    def piecewise(cls, grid: TimeGrid, levels) -> "ControlGrid":
        levels = np.asarray(levels, dtype=float)
        ts = grid.times
        idx = _interval_index(ts, grid.t0, grid.tf, levels.size)
        return cls(ts, levels[idx], levels)

    def step_inputs(self) -> np.ndarray:
        """Left/right control value for every integration step."""
        if self.levels is not None:
            n = self.times.size - 1
            mid = 0.5 * (self.times[:-1] + self.times[1:])
            idx = _interval_index(mid, self.times[0], self.times[-1], self.levels.size)
            w = self.levels[idx]
            return np.stack([w, w], axis=1)[:, :, None].copy() if n else np.empty((0, 2, 1))
        return np.stack([self.u[:-1], self.u[1:]], axis=1)[:, :, None].copy()


def _interval_index(ts, t0, tf, n):
    idx = np.floor((ts - t0) / (tf - t0) * n + 1e-9).astype(int)
    return np.clip(idx, 0, n - 1)


@dataclass
class SolveReport:
    control: ControlGrid
    states: Trajectory
    cost: float
    iterations: int
    converged: bool
    method: str
    adjoints: Trajectory | None = None
    history: list = field(default_factory=list)

    @property
    def infected(self) -> np.ndarray:
        return self.states["I_h"]


# -- normalized kernels -------------------------------------------------------

@njit(cache=True)
def normalized_field(t, x, w, c):
    s, i, r, a, sm, im = x[0], x[1], x[2], x[3], x[4], x[5]
    u = w[0]
    theta = c[10]
    inf_h = c[3] * im
    inf_m = c[4] * i
    dx = np.empty(6)
    dx[0] = c[0] - (inf_h + c[1] + u) * s + theta * u * r
    dx[1] = inf_h * s - (c[2] + c[1]) * i
    dx[2] = c[2] * i + u * s - (theta * u + c[1]) * r
    dx[3] = c[6] * (1.0 - c[7] * a) * (sm + im) - c[9] * a
    dx[4] = c[8] * a - (inf_m + c[5]) * sm
    dx[5] = inf_m * sm - c[5] * im
    return dx


@njit(cache=True)
def costate_field(t, lam, ctx, c, gamma_D):
    s, i, r, a, sm, im, u = ctx[0], ctx[1], ctx[2], ctx[3], ctx[4], ctx[5], ctx[6]
    l1, l2, l3, l4, l5, l6 = lam[0], lam[1], lam[2], lam[3], lam[4], lam[5]
    theta = c[10]
    lay = c[6] * (1.0 - c[7] * a)
    dl = np.empty(6)
    dl[0] = (l1 - l2) * c[3] * im + l1 * c[1] + (l1 - l3) * u
    dl[1] = -2.0 * gamma_D * i + l2 * (c[2] + c[1]) - l3 * c[2] + (l5 - l6) * c[4] * sm
    dl[2] = -l1 * theta * u + l3 * (c[1] + theta * u)
    dl[3] = l4 * c[6] * c[7] * (sm + im) + l4 * c[9] - l5 * c[8]
    dl[4] = -l4 * lay + (l5 - l6) * c[4] * i + l5 * c[5]
    dl[5] = (l1 - l2) * c[3] * s - l4 * lay + l6 * c[5]
    return dl


# -- pointwise Pontryagin quantities -------------------------------------------

def hamiltonian(x, lam, u: float, problem: ControlProblem) -> float:
    x = np.asarray(x, dtype=float)
    f = normalized_field(0.0, x, np.array([float(u)]), problem.coefficients())
    return float(problem.gamma_D * x[1] ** 2 + problem.gamma_V * u ** 2 + np.dot(lam, f))


def adjoint_rhs(x, lam, u: float, problem: ControlProblem) -> np.ndarray:
    """Costate derivatives, i.e. minus the state gradient of the Hamiltonian."""
    ctx = np.append(np.asarray(x, dtype=float), float(u))
    return costate_field(0.0, np.asarray(lam, dtype=float), ctx, problem.coefficients(), problem.gamma_D)


def hamiltonian_du(x, lam, u, problem: ControlProblem):
    """Partial derivative of H with respect to u (vectorized over samples)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    switch = (lam[..., 0] - lam[..., 2]) * (x[..., 0] - problem.theta * x[..., 2])
    return 2.0 * problem.gamma_V * np.asarray(u) - switch


def project_control(x, lam, problem: ControlProblem):
    """Minimizer of H over the admissible box; vectorized over samples."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    cand = (lam[..., 0] - lam[..., 2]) * (x[..., 0] - problem.theta * x[..., 2]) / (2.0 * problem.gamma_V)
    return np.minimum(problem.u_max, np.maximum(problem.u_min, cand))


# -- normalization ----------------------------------------------------------

def normalize(state, problem_or_spec) -> np.ndarray:
    """Map an absolute 6-state (or a 7-slot state with V_h = 0) to normalized units."""
    spec = _spec(problem_or_spec)
    y = np.asarray(state, dtype=float)
    if y.shape[-1] == 7:
        y = y[..., _SLOTS]
    return y / spec.scales


def denormalize(traj: Trajectory, problem_or_spec) -> Trajectory:
    """Normalized 6-state trajectory back to counts in the 7-slot layout."""
    spec = _spec(problem_or_spec)
    out = np.zeros((len(traj), 7))
    out[:, _SLOTS] = traj.states * spec.scales
    return Trajectory(traj.times, out, STATE_NAMES, traj.control)


def _spec(obj) -> NormalizationSpec:
    return obj.normalization if isinstance(obj, ControlProblem) else obj


# -- cost -------------------------------------------------------------------

def integrate_samples(values, times) -> float:
    """Composite Simpson on a uniform grid; a trapezoid covers an odd tail."""
    values = np.asarray(values, dtype=float)
    n_int = values.size - 1
    if n_int < 1:
        return 0.0
    h = (times[-1] - times[0]) / n_int
    even = n_int - (n_int % 2)
    total = 0.0
    if even:
        v = values[: even + 1]
        total = h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())
    if n_int % 2:
        total += 0.5 * h * (values[-2] + values[-1])
    return float(total)


def evaluate_cost(control: ControlGrid, infected, gamma_D: float, gamma_V: float) -> float:
    """Cost functional for a control and the normalized infected series on its grid."""
    infected = np.asarray(infected, dtype=float)
    if infected.shape != control.times.shape:
        raise ContractError(
            f"infected series ({infected.shape}) is not on the control grid ({control.times.shape})")
    ts = control.times
    disease = gamma_D * integrate_samples(infected ** 2, ts)
    if control.levels is not None:
        vacc = gamma_V * float(np.sum(control.levels ** 2)) * (ts[-1] - ts[0]) / control.levels.size
    else:
        vacc = gamma_V * integrate_samples(control.u ** 2, ts)
    return disease + vacc


# -- simulation under a given control ----------------------------------------

def simulate_control(problem: ControlProblem, control: ControlGrid,
                     coef: np.ndarray | None = None) -> Trajectory:
    """Normalized state trajectory under ``control``."""
    coef = problem.coefficients() if coef is None else coef
    traj = integrate(normalized_field, problem.grid, problem.initial_state(), (coef,),
                     inputs=control.step_inputs(), nonneg=True, names=CONTROL_STATES)
    return Trajectory(traj.times, traj.states, CONTROL_STATES, control.u)


def policy_cost(problem: ControlProblem, control: ControlGrid) -> tuple[float, Trajectory]:
    states = simulate_control(problem, control)
    return evaluate_cost(control, states["I_h"], problem.gamma_D, problem.gamma_V), states


# -- indirect method ----------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    relaxation: float = 0.5
    tol: float = 1e-6
    max_iter: int = 2000
    initial_control: float = 0.0
    # halve the relaxation whenever the control update grows (period-2 cycling)
    adaptive: bool = True
    min_relaxation: float = 1e-3


def _rel_change(new, old):
    scale = np.max(np.abs(new))
    delta = np.max(np.abs(new - old))
    return 0.0 if delta == 0.0 else delta / scale if scale > 0 else np.inf


def solve_indirect(problem: ControlProblem, config: SweepConfig = SweepConfig()) -> SolveReport:
    """Forward-backward sweep.

    Each iteration integrates the state forward under the current control,
    the costates backward from ``lambda(tf) = 0``, and relaxes the control
    towards the pointwise minimizer of the Hamiltonian.  Iteration stops when
    the control, states and costates all change by less than ``config.tol``
    relative to their sup norms.  With ``config.adaptive`` the relaxation
    weight is halved each time the control update grows, which damps the
    two-cycle the plain sweep falls into on strongly coupled problems.
    """
    if not 0 < config.relaxation <= 1:
        raise ContractError("relaxation must lie in (0, 1]")
    grid = problem.grid
    coef = problem.coefficients()
    u = np.clip(np.full(grid.n_points, config.initial_control), problem.u_min, problem.u_max)
    x_old = lam_old = None
    converged = False
    it = 0
    omega = config.relaxation
    last_step = np.inf
    for it in range(1, config.max_iter + 1):
        ctrl = ControlGrid(grid.times, u)
        states = simulate_control(problem, ctrl, coef)
        adj = integrate_backward(costate_field, grid, np.zeros(6), states, (coef, problem.gamma_D),
                                 names=ADJOINT_NAMES)
        target = project_control(states.states, adj.states, problem)
        step = np.max(np.abs(target - u))
        if config.adaptive and step > last_step and omega > config.min_relaxation:
            omega = max(0.5 * omega, config.min_relaxation)
        last_step = step
        u_new = np.clip((1.0 - omega) * u + omega * target, problem.u_min, problem.u_max)
        if x_old is not None:
            du = _rel_change(u_new, u)
            dx = _rel_change(states.states, x_old)
            dl = _rel_change(adj.states, lam_old)
            if max(du, dx, dl) < config.tol:
                converged = True
        u, x_old, lam_old = u_new, states.states, adj.states
        if converged:
            break
    else:
        log.warning("forward-backward sweep stopped after %d iterations without converging", it)

    control = ControlGrid(grid.times, u)
    states = simulate_control(problem, control, coef)
    adj = integrate_backward(costate_field, grid, np.zeros(6), states, (coef, problem.gamma_D),
                             names=ADJOINT_NAMES)
    cost = evaluate_cost(control, states["I_h"], problem.gamma_D, problem.gamma_V)
    return SolveReport(control, states, cost, it, converged, "indirect", adjoints=adj)


# -- direct method ------------------------------------------------------------

@dataclass(frozen=True)
class DirectConfig:
    fd_step: float = 1e-6
    starts: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    max_iter: int = 300
    gtol: float = 1e-8
    ftol: float = 1e-12
    armijo: float = 1e-4
    max_backtracks: int = 40


def _fd_gradient(f, x, fx, lo, hi, h):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        # step into the box so every probe stays admissible
        if x[j] + h <= hi:
            e[j] = h
            g[j] = (f(x + e) - fx) / h
        else:
            e[j] = -h
            g[j] = (fx - f(x + e)) / h
    return g


def projected_gradient(f, x0, lo, hi, config: DirectConfig = DirectConfig()):
    """Minimize ``f`` over the box ``[lo, hi]^n`` with finite-difference gradients.

    Spectral (Barzilai-Borwein) trial steps along the projection arc with
    an Armijo backtracking test; only decreasing steps are accepted, so the
    returned history of objective values is non-increasing.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = f(x)
    history = [fx]
    g = _fd_gradient(f, x, fx, lo, hi, config.fd_step)
    alpha = 1.0
    it = 0
    converged = False
    for it in range(1, config.max_iter + 1):
        pg = np.clip(x - g, lo, hi) - x
        if np.max(np.abs(pg)) < config.gtol:
            converged = True
            break
        d = np.clip(x - alpha * g, lo, hi) - x
        slope = float(g @ d)
        step = 1.0
        for _ in range(config.max_backtracks):
            x_try = np.clip(x + step * d, lo, hi)
            f_try = f(x_try)
            if f_try <= fx + config.armijo * step * slope:
                break
            step *= 0.5
        else:
            converged = True  # no admissible decrease left at finite-difference resolution
            break
        if f_try >= fx:
            converged = True
            break
        g_new = _fd_gradient(f, x_try, f_try, lo, hi, config.fd_step)
        s, y = x_try - x, g_new - g
        sy = float(s @ y)
        alpha = float(np.clip(s @ s / sy, 1e-6, 1e6)) if sy > 0 else 1e6
        decrease = fx - f_try
        x, fx, g = x_try, f_try, g_new
        history.append(fx)
        if decrease <= config.ftol * max(1.0, abs(fx)):
            converged = True
            break
    return x, fx, history, it, converged


def solve_direct(problem: ControlProblem, n_intervals: int = 10,
                 config: DirectConfig = DirectConfig()) -> SolveReport:
    """Piecewise-constant control on ``n_intervals`` equal intervals.

    Each candidate is scored by simulating the state and evaluating the cost
    on the grid.  Starts are the constant controls in ``config.starts``
    (clipped to the bounds); the best local solution is returned.
    """
    if int(n_intervals) != n_intervals or n_intervals < 1:
        raise ContractError(f"n_intervals must be a positive integer, got {n_intervals}")
    grid = problem.grid
    coef = problem.coefficients()

    def objective(levels):
        ctrl = ControlGrid.piecewise(grid, levels)
        states = simulate_control(problem, ctrl, coef)
        return evaluate_cost(ctrl, states["I_h"], problem.gamma_D, problem.gamma_V)

    best = None
    for start in config.starts:
        x0 = np.full(n_intervals, float(np.clip(start, problem.u_min, problem.u_max)))
        res = projected_gradient(objective, x0, problem.u_min, problem.u_max, config)
        log.debug("direct start %.2f -> cost %.8g in %d iterations", start, res[1], res[3])
        if best is None or res[1] < best[1]:
            best = res
    levels, cost, history, iters, converged = best
    control = ControlGrid.piecewise(grid, levels)
    states = simulate_control(problem, control, coef)
    return SolveReport(control, states, cost, iters, converged, "direct", history=history)


# -- policy studies -----------------------------------------------------------

@dataclass
class PolicyRow:
    name: str
    cost: float
    states: Trajectory
    control: ControlGrid

    @property
    def infected(self) -> np.ndarray:
        return self.states["I_h"]


def compare_policies(problem: ControlProblem, optimal: SolveReport | None = None) -> list[PolicyRow]:
    """Cost of the optimal control next to no vaccination and full vaccination."""
    optimal = solve_indirect(problem) if optimal is None else optimal
    rows = [PolicyRow("optimal", optimal.cost, optimal.states, optimal.control)]
    for name, value in (("no control", 0.0), ("upper control", 1.0)):
        ctrl = ControlGrid.constant(problem.grid, value)
        cost, states = policy_cost(problem, ctrl)
        rows.append(PolicyRow(name, cost, states, ctrl))
    return rows


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("EPIVAX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ContractError(f"EPIVAX_THREADS must be an integer, got {env!r}") from None
    return default or min(4, os.cpu_count() or 1)


def efficacy_sweep(problem: ControlProblem, thetas, config: SweepConfig = SweepConfig(),
                   threads: int | None = None) -> list[SolveReport]:
    """Independent indirect solves for each waning rate, in input order."""
    thetas = list(thetas)
    for th in thetas:
        if th < 0:
            raise ContractError(f"theta: waning rate must be >= 0, got {th}")
    if not thetas:
        return []
    problems = [replace(problem, theta=float(th)) for th in thetas]
    with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
        return list(pool.map(lambda p: solve_indirect(p, config), problems))
