"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``AC-nn PASS|FAIL`` line (also collected into the
terminal summary) before asserting, so the verdicts are visible even when
a criterion fails.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from epivax.control import (ControlGrid, ControlProblem, adjoint_rhs, compare_policies,
                            hamiltonian, hamiltonian_du, simulate_control, solve_direct,
                            solve_indirect)
from epivax.models import (PRESETS, MassImperfect, MassPerfect, MassWaning, NoVaccine, Pediatric,
                           disease_free_equilibrium, preset_scenario, rhs_pediatric, simulate)
from epivax.ode import TimeGrid, integrate
from epivax.reproduction import (critical_mass_rate, critical_pediatric_coverage, peak,
                                 r0_baseline, r0_mass, r0_pediatric)


def verdict(n, checks):
    """Record and print the verdict for criterion ``n``; ``checks`` maps label -> (ok, detail)."""
    ok = all(c for c, _ in checks.values())
    detail = "; ".join(f"{label}: {'ok' if c else 'FAILED'} ({d})" for label, (c, d) in checks.items())
    line = f"AC-{n:02d} {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    # compile the numba kernels before any runtime is measured
    simulate(preset_scenario("endemic").with_strategy(MassWaning(0.1, 0.1)))
    problem = ControlProblem(preset_scenario("endemic"), horizon=2.0)
    solve_indirect(problem)


def test_ac01_r0_values():
    (epi, t_epi) = timed(r0_baseline, PRESETS["epidemic"][0])
    (end, t_end) = timed(r0_baseline, PRESETS["endemic"][0])
    verdict(1, {
        "epidemic R0 = 2.46 +- 0.01": (abs(epi - 2.46) <= 0.01, f"{epi:.5f}"),
        "endemic R0 = 1.29 +- 0.01": (abs(end - 1.29) <= 0.01, f"{end:.5f}"),
        "runtime < 1 ms": (max(t_epi, t_end) < 1e-3, f"{max(t_epi, t_end) * 1e6:.1f} us"),
    })


def test_ac02_outbreak_scale():
    epi, t_epi = timed(simulate, preset_scenario("epidemic"), step=0.05)
    end, t_end = timed(simulate, preset_scenario("endemic"), step=0.05)
    p_epi, p_end = peak(epi)[1], peak(end)[1]
    verdict(2, {
        "epidemic I_h peak > 80000": (p_epi > 80000, f"{p_epi:.2f}"),
        "endemic I_h peak < 3000": (p_end < 3000, f"{p_end:.2f}"),
        "runtime < 5 s each": (max(t_epi, t_end) < 5.0, f"{t_epi:.3f} s / {t_end:.3f} s"),
    })


def test_ac03_mass_vaccination_suppression():
    sc = preset_scenario("epidemic")
    perfect = peak(simulate(sc.with_strategy(MassPerfect(0.05))))[1]
    imperfect = peak(simulate(sc.with_strategy(MassImperfect(0.05, 0.2))))[1]
    verdict(3, {
        "perfect psi=0.05 peak < 1200": (perfect < 1200, f"{perfect:.2f}"),
        "imperfect sigma=0.2 peak <= 9000": (imperfect <= 9000, f"{imperfect:.2f}"),
        "imperfect peak > perfect peak": (imperfect > perfect, f"{imperfect:.2f} vs {perfect:.2f}"),
    })


def test_ac04_threshold_identities():
    checks = {}
    for name in ("epidemic", "endemic"):
        par = PRESETS[name][0]
        e_p = abs(r0_pediatric(par, critical_pediatric_coverage(par).value) - 1.0)
        e_m = abs(r0_mass(par, critical_mass_rate(par).value) - 1.0)
        checks[f"{name} R0_p(p_c) = 1"] = (e_p <= 1e-12, f"err {e_p:.1e}")
        checks[f"{name} R0_psi(psi_c) = 1"] = (e_m <= 1e-12, f"err {e_m:.1e}")
    verdict(4, checks)


SWEEPS = [
    ("p", [0.0, 0.25, 0.5, 0.75, 1.0], Pediatric, -1),
    ("psi", [0.05, 0.1, 0.25, 0.5, 1.0], MassPerfect, -1),
    ("psi|sigma=0.2", [0.05, 0.1, 0.25, 0.5, 1.0], lambda v: MassImperfect(v, 0.2), -1),
    ("sigma|psi=0.85", [0.0, 0.1, 0.2, 0.5, 0.75], lambda v: MassImperfect(0.85, v), +1),
    ("theta|psi=0.85", [0.0, 0.05, 0.1, 0.15, 0.2], lambda v: MassWaning(0.85, v), +1),
]


def test_ac05_monotonicity_suites():
    t0 = time.perf_counter()
    checks = {}
    for name in ("epidemic", "endemic"):
        sc = preset_scenario(name)
        for label, values, make, direction in SWEEPS:
            peaks = np.array([peak(simulate(sc.with_strategy(make(v))))[1] for v in values])
            ok = bool(np.all(direction * np.diff(peaks) >= 0))
            trend = "non-increasing" if direction < 0 else "non-decreasing"
            checks[f"{name} {label} {trend}"] = (ok, " > ".join(f"{p:.4g}" for p in peaks)
                                                  if direction < 0 else " < ".join(f"{p:.4g}" for p in peaks))
    elapsed = time.perf_counter() - t0
    checks["runtime < 60 s"] = (elapsed < 60, f"{elapsed:.2f} s")
    verdict(5, checks)


def test_ac06_equilibrium_and_conservation():
    checks = {}
    for name in ("epidemic", "endemic"):
        par = PRESETS[name][0]
        dfe = disease_free_equilibrium(par)
        scale = np.array([par.N_h] * 4 + [par.k * par.N_h] + [par.m * par.N_h] * 2)
        res = float(np.max(np.abs(rhs_pediatric(dfe, 0.0, par) / scale)))
        checks[f"{name} DFE residual < 1e-9"] = (res < 1e-9, f"{res:.1e}")
        sc = preset_scenario(name)
        drift = 0.0
        for strategy in (NoVaccine(), Pediatric(0.5), MassPerfect(0.05), MassImperfect(0.05, 0.2),
                         MassWaning(0.85, 0.2)):
            tr = simulate(sc.with_strategy(strategy))
            drift = max(drift, float(np.max(np.abs(tr.states[:, :4].sum(axis=1) - par.N_h))))
        problem = ControlProblem(sc)
        ctrl = simulate_control(problem, ControlGrid.constant(problem.grid, 0.5))
        drift = max(drift, float(np.max(np.abs(ctrl.states[:, :3].sum(axis=1) - 1.0))) * par.N_h)
        checks[f"{name} human drift < 1e-6 N_h"] = (drift < 1e-6 * par.N_h, f"{drift:.2e} persons")
    verdict(6, checks)


_SOLVES = {}


def solves(name):
    """Fresh (timed) indirect and direct solves for a preset, shared by AC-07/08/09."""
    if name not in _SOLVES:
        problem = ControlProblem.from_preset(name)
        ind, t_ind = timed(solve_indirect, problem)
        dire, t_dir = timed(solve_direct, problem, 10)
        _SOLVES[name] = (problem, ind, dire, t_ind + t_dir)
    return _SOLVES[name]


def test_ac07_policy_ordering():
    checks = {}
    bands = {"epidemic": (0.2, 0.45), "endemic": (0.005, 0.02)}
    for name in ("epidemic", "endemic"):
        problem, ind, _, _ = solves(name)
        opt, zero, full = (r.cost for r in compare_policies(problem, ind))
        checks[f"{name} J(opt) < J(0) < J(1)"] = (opt < zero < full, f"{opt:.6g} < {zero:.6g} < {full:.6g}")
        checks[f"{name} J(1) >= 100 J(0)"] = (full >= 100 * zero, f"ratio {full / zero:.4g}")
        lo, hi = bands[name]
        checks[f"{name} J(0) in [{lo}, {hi}]"] = (lo <= zero <= hi, f"{zero:.6g}")
    verdict(7, checks)


def test_ac08_direct_vs_indirect():
    checks = {}
    bands = {"epidemic": ((0.04, 0.10), (0.05, 0.15)), "endemic": ((0.0004, 0.002), None)}
    total = 0.0
    for name in ("epidemic", "endemic"):
        _, ind, dire, elapsed = solves(name)
        total += elapsed
        checks[f"{name} direct >= indirect"] = (dire.cost >= ind.cost, f"{dire.cost:.6g} >= {ind.cost:.6g}")
        ind_band, dir_band = bands[name]
        checks[f"{name} indirect in {list(ind_band)}"] = (ind_band[0] <= ind.cost <= ind_band[1],
                                                         f"{ind.cost:.6g}")
        if dir_band:
            checks[f"{name} direct in {list(dir_band)}"] = (dir_band[0] <= dire.cost <= dir_band[1],
                                                           f"{dire.cost:.6g}")
    checks["runtime < 5 min"] = (total < 300, f"{total:.1f} s")
    verdict(8, checks)


def test_ac09_pontryagin_consistency():
    checks = {}
    rng = np.random.default_rng(7)
    problem = ControlProblem.from_preset("epidemic")
    worst, h = 0.0, 1e-6
    for _ in range(100):
        x, lam, u = rng.random(6), rng.normal(size=6), rng.random()
        grad = np.array([(hamiltonian(x + h * e, lam, u, problem) - hamiltonian(x - h * e, lam, u, problem))
                         / (2 * h) for e in np.eye(6)])
        worst = max(worst, float(np.max(np.abs(adjoint_rhs(x, lam, u, problem) + grad) / np.max(np.abs(grad)))))
    checks["adjoint = -grad_x H (100 points)"] = (worst < 1e-5, f"max rel err {worst:.1e}")
    for name in ("epidemic", "endemic"):
        prob, ind, _, _ = solves(name)
        u = ind.control.u
        du = hamiltonian_du(ind.states.states, ind.adjoints.states, u, prob)
        interior = (u > prob.u_min) & (u < prob.u_max)
        stat = float(np.max(np.abs(du[interior]))) if interior.any() else 0.0
        checks[f"{name} converged"] = (ind.converged, f"{ind.iterations} iterations")
        checks[f"{name} |dH/du| < 1e-4 interior"] = (stat < 1e-4, f"{stat:.1e} over {int(interior.sum())} points")
        end = float(np.max(np.abs(ind.adjoints.states[-1])))
        checks[f"{name} lambda(tf) = 0"] = (end == 0.0, f"{end}")
    verdict(9, checks)


def test_ac10_rk4_order():
    errs = []
    for h in (0.1, 0.05):
        g = TimeGrid.from_step(0.0, 1.0, h)
        tr = integrate(lambda t, y: -y, g, [1.0])
        errs.append(float(np.max(np.abs(tr.states[:, 0] - np.exp(-g.times)))))
    ratio = errs[0] / errs[1]
    verdict(10, {"error ratio per halving in [14, 18]": (14 <= ratio <= 18, f"{ratio:.3f}")})
