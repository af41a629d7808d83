"""Command-line entry point: ``epivax <command> ...``.

Exit status is 0 on success, 1 on validation or solver errors and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import control as oc
from .errors import EpivaxError
from .models import (PRESETS, STATE_NAMES, MassImperfect, MassPerfect, MassWaning, Pediatric,
                     simulate)
from .reproduction import critical_mass_rate, critical_pediatric_coverage, peak, r0_family
from .scenario_io import (finite_json, load_scenario, write_table_csv, write_trajectory_csv)

log = logging.getLogger("epivax")


def _sig4(x: float) -> float:
    return float(f"{x:.4g}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _summary(sf, traj) -> dict:
    params = sf.scenario.params
    t_pk, v_pk = peak(traj, "I_h")
    fam = r0_family(params)
    return {
        "label": sf.scenario.label,
        "strategy": {"type": sf.scenario.strategy.tag, **vars(sf.scenario.strategy)},
        "R0": _sig4(fam["R0"]),
        "R0_strategy": _sig4(_strategy_r0(params, sf.scenario.strategy)),
        "p_c": fam["p_c"],
        "psi_c": fam["psi_c"],
        "peak": {"t": t_pk, "I_h": v_pk},
        "final": dict(zip(STATE_NAMES, traj.final.tolist())),
        "solver": {"method": sf.solver.method, "step": sf.solver.step, "points": len(traj)},
    }


def _strategy_r0(params, strategy):
    from .reproduction import r0_for_strategy

    return r0_for_strategy(params, strategy)


def _out_path(args, sf, key):
    return getattr(args, "out", None) or sf.output.get(key)


def cmd_simulate(args) -> int:
    sf = load_scenario(args.scenario)
    step = args.step or sf.solver.step
    traj = simulate(sf.scenario, step=step, method=args.method or sf.solver.method)
    out = _out_path(args, sf, "csv")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, out)
    summary = _summary(sf, traj)
    summary["solver"]["step"] = step
    print(finite_json(summary))
    return 0


def cmd_r0(args) -> int:
    sf = load_scenario(args.scenario)
    params = sf.scenario.params
    fam = r0_family(params, p=args.p or 0.0, psi=args.psi or 0.0, sigma=args.sigma or 0.0)
    result = {k: _sig4(v) for k, v in fam.items() if k.startswith("R0")}
    if args.theta is not None:
        result["waning_rate"] = args.theta
    pc, psic = critical_pediatric_coverage(params), critical_mass_rate(params)
    result.update(p_c=pc.value, psi_c=psic.value, subcritical=pc.subcritical)
    print(finite_json({"label": sf.scenario.label, **result}))
    return 0


def _sweep_strategy(vary, value, args):
    if vary == "p":
        return Pediatric(value)
    if vary == "psi":
        if args.sigma is not None:
            return MassImperfect(value, args.sigma)
        if args.theta is not None:
            return MassWaning(value, args.theta)
        return MassPerfect(value)
    if vary == "sigma":
        return MassImperfect(args.psi, value)
    return MassWaning(args.psi, value)


def cmd_sweep(args) -> int:
    sf = load_scenario(args.scenario)
    scenarios = [sf.scenario.with_strategy(_sweep_strategy(args.vary, v, args)) for v in args.values]
    step = args.step or sf.solver.step
    with ThreadPoolExecutor(max_workers=oc.thread_count()) as pool:
        trajs = list(pool.map(lambda s: simulate(s, step=step), scenarios))
    rows = []
    for value, traj in zip(args.values, trajs):
        t_pk, v_pk = peak(traj, "I_h")
        rows.append([value, t_pk, v_pk])
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            write_trajectory_csv(traj, Path(args.out_dir) / f"{sf.scenario.label or 'run'}_{args.vary}_{value:g}.csv")
    if args.out_dir:
        write_table_csv(Path(args.out_dir) / f"{sf.scenario.label or 'run'}_{args.vary}_peaks.csv",
                        [args.vary, "t_peak", "I_h_peak"], rows)
    print(f"{args.vary},t_peak,I_h_peak")
    for value, t_pk, v_pk in rows:
        print(f"{value:g},{t_pk:.17g},{v_pk:.17g}")
    return 0


def _write_report(report, problem, out_dir, stem):
    absolute = oc.denormalize(report.states, problem)
    write_trajectory_csv(absolute, out_dir / f"{stem}.csv", report.control)


def _report_json(report, problem):
    t_pk, v_pk = peak(oc.denormalize(report.states, problem), "I_h")
    return {"method": report.method, "cost": report.cost, "iterations": report.iterations,
            "converged": report.converged, "u_max_applied": float(report.control.u.max()),
            "peak": {"t": t_pk, "I_h": v_pk}}


def cmd_optimize(args) -> int:
    sf = load_scenario(args.scenario)
    problem = sf.control_problem()
    s = sf.solver
    sweep_cfg = oc.SweepConfig(relaxation=s.relaxation, tol=s.tol, max_iter=s.max_iter)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    label = sf.scenario.label or "run"
    result = {"label": label, "theta": problem.theta, "gamma_D": problem.gamma_D,
              "gamma_V": problem.gamma_V, "reports": []}

    if args.thetas is not None:
        reports = oc.efficacy_sweep(problem, args.thetas, sweep_cfg)
        for th, rep in zip(args.thetas, reports):
            entry = _report_json(rep, problem)
            entry["theta"] = th
            result["reports"].append(entry)
            if out_dir:
                _write_report(rep, problem, out_dir, f"{label}_theta_{th:g}")
        print(finite_json(result))
        return 0

    if args.method in ("indirect", "both"):
        rep = oc.solve_indirect(problem, sweep_cfg)
        result["reports"].append(_report_json(rep, problem))
        if out_dir:
            _write_report(rep, problem, out_dir, f"{label}_indirect")
    if args.method in ("direct", "both"):
        cfg = oc.DirectConfig(fd_step=s.fd_step, starts=s.starts)
        rep = oc.solve_direct(problem, s.n_intervals, cfg)
        result["reports"].append(_report_json(rep, problem))
        if out_dir:
            _write_report(rep, problem, out_dir, f"{label}_direct")
    print(finite_json(result))
    return 0


def cmd_compare(args) -> int:
    sf = load_scenario(args.scenario)
    problem = sf.control_problem()
    rows = oc.compare_policies(problem)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        label = sf.scenario.label or "run"
        infected = np.column_stack([r.infected * problem.normalization.human_scale for r in rows])
        write_table_csv(out_dir / f"{label}_policies_infected.csv",
                        ["t", *(r.name.replace(" ", "_") for r in rows)],
                        [[t, *vals] for t, vals in zip(rows[0].states.times, infected)])
        write_table_csv(out_dir / f"{label}_policies_cost.csv", ["policy", "cost"],
                        [[r.name, r.cost] for r in rows])
    print(finite_json({"label": sf.scenario.label,
                       "costs": {r.name: r.cost for r in rows},
                       "peak_I_h": {r.name: float(r.infected.max() * problem.normalization.human_scale)
                                    for r in rows}}))
    return 0


def cmd_presets(args) -> int:
    out = {}
    for name, (params, initial) in PRESETS.items():
        out[name] = {"params": params.to_dict(), "initial": initial.to_dict(), "horizon": 365.0}
    print(finite_json(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epivax", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_arg(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file or preset name")

    p = sub.add_parser("simulate", help="integrate a scenario; CSV + summary JSON")
    scenario_arg(p)
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--step", type=float)
    p.add_argument("--method", choices=["rk4", "rk45"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("r0", help="reproduction numbers and eradication thresholds")
    scenario_arg(p)
    p.add_argument("--p", type=float)
    p.add_argument("--psi", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--theta", type=float)
    p.set_defaults(func=cmd_r0)

    p = sub.add_parser("sweep", help="peak infected over a parameter sweep")
    scenario_arg(p)
    p.add_argument("--vary", required=True, choices=["p", "psi", "sigma", "theta"])
    p.add_argument("--values", required=True, type=_floats)
    p.add_argument("--psi", type=float, default=0.85, help="fixed psi when varying sigma or theta")
    p.add_argument("--sigma", type=float, help="imperfect vaccine when varying psi")
    p.add_argument("--theta", type=float, help="waning vaccine when varying psi")
    p.add_argument("--step", type=float)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="optimal vaccination control")
    scenario_arg(p)
    p.add_argument("--method", choices=["indirect", "direct", "both"], default="both")
    p.add_argument("--thetas", type=_floats, help="indirect solves for several waning rates")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("compare", help="optimal vs no control vs full control")
    scenario_arg(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("presets", help="list built-in scenarios")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EpivaxError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"epivax: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
