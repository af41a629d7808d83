"""Scenario files (strict JSON) and trajectory CSV output.

A scenario document looks like::

    {
      "schema_version": "1",
      "preset": "epidemic",
      "scenario": {"label": "...", "horizon": 365,
                   "params": {"B": 0.8, ...}, "initial": {"S_h": 479990, ...}},
      "strategy": {"type": "imperfect", "psi": 0.05, "sigma": 0.2},
      "control": {"gamma_D": 0.5, "gamma_V": 0.5, "theta": 0.05},
      "solver": {"step": 0.05},
      "output": {"csv": "run.csv"}
    }

Every key is optional.  ``preset`` seeds parameters and initial conditions,
which the ``scenario`` block may then override field by field.  Without a
preset, ``params`` and ``initial`` must be complete.  Unknown keys are
errors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ContractError, EpivaxError
from .models import (PRESETS, STATE_NAMES, STRATEGIES, EpiParams, NoVaccine, Scenario, SysState)
from .ode import DEFAULT_STEP, Trajectory

SCHEMA_VERSION = "1"

_TOP_KEYS = {"schema_version", "preset", "scenario", "strategy", "control", "solver", "output"}
_SCENARIO_KEYS = {"label", "horizon", "params", "initial"}
_CONTROL_KEYS = {"gamma_D", "gamma_V", "theta", "u_min", "u_max"}
_OUTPUT_KEYS = {"csv", "summary", "dir"}
_STRATEGY_FIELDS = {
    "none": (),
    "pediatric": ("p",),
    "mass": ("psi",),
    "imperfect": ("psi", "sigma"),
    "waning": ("psi", "theta"),
}


class ScenarioError(EpivaxError, ValueError):
    """A scenario document failed to parse or validate.

    ``path`` names the offending field (dotted), when there is one.
    """

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class SolverSettings:
    step: float = DEFAULT_STEP
    method: str = "rk4"
    relaxation: float = 0.5
    tol: float = 1e-6
    max_iter: int = 2000
    n_intervals: int = 10
    fd_step: float = 1e-6
    starts: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)

    def __post_init__(self):
        if not self.step > 0:
            raise ContractError(f"step: must be positive, got {self.step}")
        if self.method not in ("rk4", "rk45"):
            raise ContractError(f"method: expected 'rk4' or 'rk45', got {self.method!r}")
        if not 0 < self.relaxation <= 1:
            raise ContractError(f"relaxation: must lie in (0, 1], got {self.relaxation}")
        if not self.tol > 0:
            raise ContractError(f"tol: must be positive, got {self.tol}")
        for name in ("max_iter", "n_intervals"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ContractError(f"{name}: must be a positive integer, got {v}")
        if not self.fd_step > 0:
            raise ContractError(f"fd_step: must be positive, got {self.fd_step}")
        if not self.starts or any(not 0 <= s <= 1 for s in self.starts):
            raise ContractError(f"starts: need at least one value in [0, 1], got {self.starts}")


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    schema_version: str = SCHEMA_VERSION
    control: dict | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: dict = field(default_factory=dict)

    def control_problem(self, **overrides):
        from .control import ControlProblem

        kw = dict(self.control or {})
        kw.update(overrides)
        scenario = replace(self.scenario, strategy=NoVaccine())
        return ControlProblem(scenario=scenario, step=self.solver.step, **kw)


def _reject_unknown(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ScenarioError("expected an object", path)
    for key in obj:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ScenarioError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"expected a finite number, got {value!r}", path)
    return float(value)


def _build(cls, data, path):
    try:
        return cls(**data)
    except ContractError as exc:
        # our validators prefix messages with the field name
        msg = str(exc)
        name, sep, rest = msg.partition(":")
        if sep and name in {f.name for f in fields(cls)}:
            raise ScenarioError(rest.strip(), f"{path}.{name}") from None
        raise ScenarioError(msg, path) from None


def _parse_block(raw, base, cls, path):
    names = [f.name for f in fields(cls)]
    _reject_unknown(raw, set(names), path)
    merged = dict(base or {})
    for key, value in raw.items():
        merged[key] = _number(value, f"{path}.{key}")
    missing = [n for n in names if n not in merged]
    if missing:
        raise ScenarioError(f"missing fields {missing} (no preset to fill them)", path)
    return _build(cls, merged, path)


def _parse_strategy(raw):
    if raw is None:
        return NoVaccine()
    if not isinstance(raw, dict) or "type" not in raw:
        raise ScenarioError("expected an object with a 'type' tag", "strategy")
    tag = raw["type"]
    if tag not in _STRATEGY_FIELDS:
        raise ScenarioError(f"unknown strategy tag {tag!r} (known: {', '.join(_STRATEGY_FIELDS)})",
                            "strategy.type")
    wanted = _STRATEGY_FIELDS[tag]
    _reject_unknown(raw, {"type", *wanted}, "strategy")
    values = {}
    for name in wanted:
        if name not in raw:
            raise ScenarioError("missing field", f"strategy.{name}")
        values[name] = _number(raw[name], f"strategy.{name}")
    return _build(STRATEGIES[tag], values, "strategy")


def _parse_solver(raw):
    if raw is None:
        return SolverSettings()
    allowed = {f.name for f in fields(SolverSettings)}
    _reject_unknown(raw, allowed, "solver")
    kw = {}
    for key, value in raw.items():
        if key == "method":
            kw[key] = value
        elif key == "starts":
            if not isinstance(value, list):
                raise ScenarioError("expected a list of numbers", "solver.starts")
            kw[key] = tuple(_number(v, f"solver.starts[{i}]") for i, v in enumerate(value))
        elif key in ("max_iter", "n_intervals"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioError(f"expected an integer, got {value!r}", f"solver.{key}")
            kw[key] = value
        else:
            kw[key] = _number(value, f"solver.{key}")
    return _build(SolverSettings, kw, "solver")


def scenario_from_dict(doc: dict) -> ScenarioFile:
    _reject_unknown(doc, _TOP_KEYS, "")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {version!r}", "schema_version")

    base_params = base_initial = None
    label, horizon = "", 365.0
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ScenarioError(f"unknown preset {preset!r} (known: {', '.join(PRESETS)})", "preset")
        params, initial = PRESETS[preset]
        base_params, base_initial = asdict(params), asdict(initial)
        label = preset

    sc = doc.get("scenario", {})
    _reject_unknown(sc, _SCENARIO_KEYS, "scenario")
    if "label" in sc:
        if not isinstance(sc["label"], str):
            raise ScenarioError("expected a string", "scenario.label")
        label = sc["label"]
    if "horizon" in sc:
        horizon = _number(sc["horizon"], "scenario.horizon")
    params = _parse_block(sc.get("params", {}), base_params, EpiParams, "scenario.params")
    initial = _parse_block(sc.get("initial", {}), base_initial, SysState, "scenario.initial")
    strategy = _parse_strategy(doc.get("strategy"))
    try:
        scenario = Scenario(params, initial, strategy, horizon, label)
    except ContractError as exc:
        raise ScenarioError(str(exc), "scenario") from None

    control = doc.get("control")
    if control is not None:
        _reject_unknown(control, _CONTROL_KEYS, "control")
        control = {k: _number(v, f"control.{k}") for k, v in control.items()}

    output = doc.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    for key, value in output.items():
        if not isinstance(value, str):
            raise ScenarioError("expected a path string", f"output.{key}")

    sf = ScenarioFile(scenario, version, control, _parse_solver(doc.get("solver")), dict(output))
    if control is not None:
        try:
            sf.control_problem()
        except ContractError as exc:
            raise ScenarioError(str(exc), "control") from None
    return sf


def parse_scenario(text: str) -> ScenarioFile:
    """Parse and validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def scenario_to_dict(sf: ScenarioFile) -> dict:
    """Fully explicit document (no preset shortcut) for ``sf``."""
    sc = sf.scenario
    strategy = {"type": sc.strategy.tag}
    for name in _STRATEGY_FIELDS[sc.strategy.tag]:
        strategy[name] = getattr(sc.strategy, name)
    solver = asdict(sf.solver)
    solver["starts"] = list(solver["starts"])
    doc = {
        "schema_version": sf.schema_version,
        "scenario": {"label": sc.label, "horizon": sc.horizon,
                     "params": sc.params.to_dict(), "initial": sc.initial.to_dict()},
        "strategy": strategy,
        "solver": solver,
    }
    if sf.control is not None:
        doc["control"] = dict(sf.control)
    if sf.output:
        doc["output"] = dict(sf.output)
    return doc


def serialize_scenario(sf: ScenarioFile) -> str:
    return json.dumps(scenario_to_dict(sf), indent=2)


def load_scenario(ref: str) -> ScenarioFile:
    """Read a scenario file, or build the bare preset when ``ref`` names one."""
    if ref in PRESETS:
        return scenario_from_dict({"preset": ref})
    try:
        with open(ref, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", ref) from None
    return parse_scenario(text)


# -- CSV ----------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path, control=None) -> None:
    """Write ``t,S_h,...,I_m[,u]`` rows in absolute units.

    ``control`` is a per-grid-point array (or anything with a ``u`` attribute).
    """
    if tuple(traj.names) != STATE_NAMES:
        raise ContractError(f"expected a trajectory with columns {STATE_NAMES}, got {traj.names}")
    u = getattr(control, "u", control)
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape != traj.times.shape:
            raise ContractError("control is not sampled on the trajectory grid")
    header = ["t", *STATE_NAMES] + (["u"] if u is not None else [])
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, t in enumerate(traj.times):
                row = [_fmt(t), *(_fmt(v) for v in traj.states[i])]
                if u is not None:
                    row.append(_fmt(u[i]))
                writer.writerow(row)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write trajectory CSV: {exc.strerror}", str(path)) from None


def read_trajectory_csv(path) -> tuple[Trajectory, np.ndarray | None]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[: 1 + len(STATE_NAMES)] != ["t", *STATE_NAMES]:
        raise ContractError(f"unexpected CSV header {header}")
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    control = data[:, -1].copy() if header[-1] == "u" else None
    traj = Trajectory(data[:, 0].copy(), data[:, 1:8].copy(), STATE_NAMES, control)
    return traj, control


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def finite_json(obj) -> str:
    """Serialize a summary, refusing NaN or infinities."""
    return json.dumps(_plain(obj), indent=2, allow_nan=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
