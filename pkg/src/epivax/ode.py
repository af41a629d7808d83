"""Explicit Runge-Kutta integration on fixed time grids.

The production path is classical fourth-order Runge-Kutta with a constant
step.  The adaptive Dormand-Prince 5(4) mode is only meant as an oracle for
cross-checks and is delegated to :func:`scipy.integrate.solve_ivp`.

Vector fields follow the convention ``rhs(t, y, *args) -> ndarray``.  When
``rhs`` is a numba-compiled function, the stepping loops run in nopython
mode as well; plain Python callables go through the same loop source
interpreted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numba.core.dispatcher import Dispatcher
from numba.extending import register_jitable
from scipy.integrate import solve_ivp

from .errors import ContractError, IntegrationError

DEFAULT_STEP = 0.05
ADAPTIVE_RTOL = 1e-8
ADAPTIVE_ATOL = 1e-10
NEGATIVE_SNAP = 1e-12

_OK, _NONFINITE, _NEGATIVE = 0, 1, 2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + i*(tf - t0)/(n_points - 1)``.

    Times are generated by index arithmetic so that both endpoints are exact.
    """

    t0: float
    tf: float
    n_points: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ContractError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ContractError(f"n_points must be an integer >= 2, got {self.n_points}")

    @classmethod
    def from_step(cls, t0: float, tf: float, step: float = DEFAULT_STEP) -> "TimeGrid":
        if step <= 0:
            raise ContractError(f"step must be positive, got {step}")
        n_steps = int(round((tf - t0) / step))
        if n_steps < 1 or abs(n_steps * step - (tf - t0)) > 1e-9 * max(1.0, abs(tf - t0)):
            raise ContractError(f"step {step} does not divide [{t0}, {tf}] into whole steps")
        return cls(float(t0), float(tf), n_steps + 1)

    @property
    def step(self) -> float:
        return (self.tf - self.t0) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        i = np.arange(self.n_points, dtype=float)
        ts = self.t0 + i * (self.tf - self.t0) / (self.n_points - 1)
        ts[-1] = self.tf
        return ts


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a time grid, optionally with the control used."""

    times: np.ndarray
    states: np.ndarray
    names: tuple = ()
    control: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise ContractError("states must be (n_times, dim) and match times")
        if self.names and len(self.names) != self.states.shape[1]:
            raise ContractError("one name per state component is required")
        if self.control is not None and self.control.shape[0] != self.times.shape[0]:
            raise ContractError("control must be sampled on the trajectory grid")

    def __len__(self):
        return self.times.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "u" and self.control is not None:
            return self.control
        try:
            return self.states[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown compartment {name!r}; have {self.names}") from None

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@register_jitable
def _rk4(rhs, t, y, h, args):
    k1 = rhs(t, y, *args)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, *args)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, *args)
    k4 = rhs(t + h, y + h * k3, *args)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@register_jitable
def _rk4_input(rhs, t, y, h, w0, w1, args):
    # input w varies linearly across the step: w0 at t, w1 at t + h
    wm = 0.5 * (w0 + w1)
    k1 = rhs(t, y, w0, *args)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, wm, *args)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, wm, *args)
    k4 = rhs(t + h, y + h * k3, w1, *args)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@register_jitable
def _check(y, nonneg, neg_tol):
    for j in range(y.shape[0]):
        v = y[j]
        if not np.isfinite(v):
            return _NONFINITE, j
        if nonneg and v < 0.0:
            if v < -neg_tol:
                return _NEGATIVE, j
            y[j] = 0.0
    return _OK, -1


def _forward_loop(rhs, ts, y0, args, nonneg, neg_tol):
    n = ts.shape[0]
    out = np.empty((n, y0.shape[0]))
    out[0] = y0
    y = y0.copy()
    for i in range(n - 1):
        h = ts[i + 1] - ts[i]
        y = _rk4(rhs, ts[i], y, h, args)
        status, comp = _check(y, nonneg, neg_tol)
        if status != _OK:
            return out, status, i, comp
        out[i + 1] = y
    return out, _OK, -1, -1


def _forward_loop_input(rhs, ts, y0, inputs, args, nonneg, neg_tol):
    n = ts.shape[0]
    out = np.empty((n, y0.shape[0]))
    out[0] = y0
    y = y0.copy()
    for i in range(n - 1):
        h = ts[i + 1] - ts[i]
        y = _rk4_input(rhs, ts[i], y, h, inputs[i, 0], inputs[i, 1], args)
        status, comp = _check(y, nonneg, neg_tol)
        if status != _OK:
            return out, status, i, comp
        out[i + 1] = y
    return out, _OK, -1, -1


def _backward_loop(rhs, ts, y_tf, ctx, args):
    n = ts.shape[0]
    out = np.empty((n, y_tf.shape[0]))
    out[n - 1] = y_tf
    y = y_tf.copy()
    for i in range(n - 1, 0, -1):
        h = ts[i - 1] - ts[i]  # negative step
        y = _rk4_input(rhs, ts[i], y, h, ctx[i], ctx[i - 1], args)
        status, comp = _check(y, False, 0.0)
        if status != _OK:
            return out, status, i, comp
        out[i - 1] = y
    return out, _OK, -1, -1


_forward_loop_nb = njit(_forward_loop)
_forward_loop_input_nb = njit(_forward_loop_input)
_backward_loop_nb = njit(_backward_loop)
_rk4_nb = njit(_rk4)


def _is_jitted(rhs) -> bool:
    return isinstance(rhs, Dispatcher)


def _raise_for(status, t, comp):
    if status == _NONFINITE:
        raise IntegrationError(f"non-finite state component {comp} after t={t:g}", t=t, component=comp)
    raise IntegrationError(f"state component {comp} went negative after t={t:g}", t=t, component=comp)


def rk4_step(rhs, t: float, y, h: float, args=()) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h`` from ``(t, y)``."""
    if not h > 0:
        raise ContractError(f"step must be positive, got {h}")
    y = np.asarray(y, dtype=float)
    step = _rk4_nb if _is_jitted(rhs) else _rk4
    y1 = np.asarray(step(rhs, float(t), y, float(h), tuple(args)), dtype=float)
    bad = np.flatnonzero(~np.isfinite(y1))
    if bad.size:
        _raise_for(_NONFINITE, t, int(bad[0]))
    return y1


def integrate(rhs, grid: TimeGrid, y0, args=(), *, method: str = "rk4", inputs=None,
              nonneg: bool = False, neg_tol: float = NEGATIVE_SNAP, names=(),
              rtol: float = ADAPTIVE_RTOL, atol: float = ADAPTIVE_ATOL) -> Trajectory:
    """Integrate ``y' = rhs(t, y, *args)`` and sample the solution on ``grid``.

    Parameters
    ----------
    method : {"rk4", "rk45"}
        Fixed-step RK4 on the grid, or adaptive Dormand-Prince resampled onto
        the grid through its dense output.
    inputs : array of shape (n_points - 1, 2, m), optional
        Exogenous input per step, given as its values at the left and right
        end of the step and interpolated linearly in between.  The field is
        then called as ``rhs(t, y, w, *args)``.  Piecewise-constant inputs
        with jumps on grid points are expressed exactly this way.
    nonneg : bool
        Snap negative components above ``-neg_tol`` to zero after each step and
        fail on anything more negative.
    """
    y0 = np.array(y0, dtype=float, ndmin=1)
    ts = grid.times
    args = tuple(args)

    if method == "rk45":
        if inputs is not None:
            raise ContractError("exogenous inputs are only supported by the rk4 path")
        sol = solve_ivp(lambda t, y: rhs(t, y, *args), (ts[0], ts[-1]), y0, method="RK45",
                        t_eval=ts, rtol=rtol, atol=atol)
        if sol.status != 0:
            t_last = float(sol.t[-1]) if sol.t.size else float(ts[0])
            raise IntegrationError(f"adaptive integration failed: {sol.message}", t=t_last)
        return Trajectory(ts, np.ascontiguousarray(sol.y.T), tuple(names))
    if method != "rk4":
        raise ContractError(f"unknown method {method!r}")

    jit = _is_jitted(rhs)
    if inputs is None:
        loop = _forward_loop_nb if jit else _forward_loop
        out, status, i, comp = loop(rhs, ts, y0, args, nonneg, neg_tol)
    else:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 2:
            inputs = inputs[:, :, None]
        if inputs.shape[:2] != (ts.shape[0] - 1, 2):
            raise ContractError(f"inputs must have shape ({ts.shape[0] - 1}, 2, m)")
        loop = _forward_loop_input_nb if jit else _forward_loop_input
        out, status, i, comp = loop(rhs, ts, y0, inputs, args, nonneg, neg_tol)
    if status != _OK:
        _raise_for(status, ts[i], comp)
    return Trajectory(ts, out, tuple(names))


def integrate_backward(rhs, grid: TimeGrid, y_tf, forward_ctx: Trajectory, args=(), *,
                       names=()) -> Trajectory:
    """Integrate a terminal-value problem from ``grid.tf`` down to ``grid.t0``.

    The field is called as ``rhs(t, y, c, *args)`` where ``c`` holds the
    forward states (with the control appended when the context carries one),
    interpolated linearly between grid points.  The result is in ascending
    time order.
    """
    ts = grid.times
    if len(forward_ctx) != ts.shape[0] or not np.array_equal(forward_ctx.times, ts):
        raise ContractError("forward context is not sampled on the integration grid")
    ctx = forward_ctx.states
    if forward_ctx.control is not None:
        ctx = np.column_stack([ctx, forward_ctx.control])
    ctx = np.ascontiguousarray(ctx, dtype=float)
    y_tf = np.array(y_tf, dtype=float, ndmin=1)
    loop = _backward_loop_nb if _is_jitted(rhs) else _backward_loop
    out, status, i, comp = loop(rhs, ts, y_tf, ctx, tuple(args))
    if status != _OK:
        _raise_for(status, ts[i], comp)
    return Trajectory(ts, out, tuple(names))
