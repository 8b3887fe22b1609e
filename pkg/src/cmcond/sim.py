"""Cycle-by-cycle simulation of extremum current-mode control with interference.

Internally everything runs on the rising-ramp canonical loop from
``types.geometry``: valley control is peak control with every current
negated. A cycle is the controlled interval (terminated by the comparator)
followed by the uncontrolled interval. The sensor only sees the switch that
is on during the controlled interval and reads zero during the other one,
which is what makes the low-pass filter state decay between cycles.

Trigger detection scans a grid fine enough to resolve the interference,
latches the first crossing and refines it with Brent's method. The ramp,
interference, filter and integrator paths are all closed-form, so the
refined instant is limited only by the root-finder tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import interference as itf
from .types import (
    ConditioningMethod,
    ConverterConfig,
    InterferenceSpec,
    LowPassFilter,
    ModulationScheme,
    OverdriveDelay,
    SlopeComp,
    ValidationError,
    geometry,
)

DIVERGENCE_FACTOR = 1e3
_CHUNK = 256


class TriggerStarvation(RuntimeError):
    """The comparator never fired within the allowed span of the cycle."""


@dataclass(frozen=True)
class CycleSample:
    n: int
    t_on: float
    i_extremum: float
    i_command: float
    trigger_time_deviation: float
    saturated: bool = False


@dataclass
class SimTrace:
    samples: List[CycleSample]
    dense_waveform: Optional[tuple] = None
    terminated_by: str = "cycle_budget"
    final_state: Optional["InitState"] = field(default=None, repr=False)

    @property
    def t_on(self) -> np.ndarray:
        return np.array([s.t_on for s in self.samples])

    @property
    def extremum(self) -> np.ndarray:
        return np.array([s.i_extremum for s in self.samples])

    @property
    def command(self) -> np.ndarray:
        return np.array([s.i_command for s in self.samples])


@dataclass(frozen=True)
class InitState:
    """State at the start of a run.

    ``i_extremum`` is the extremum of the cycle before the first one,
    ``filter_state`` the filtered sensor value at the end of that cycle's
    controlled interval, ``t_prev`` its controlled interval.
    """

    i_extremum: float
    filter_state: Optional[float] = None
    t_prev: Optional[float] = None


@dataclass(frozen=True)
class CycleContext:
    """Everything find_trigger needs, already in canonical (rising) coordinates."""

    ramp: float
    start: float
    threshold: float
    method: ConditioningMethod
    waveform: object = None
    sign: int = 1
    shift: float = 0.0
    filter_state: float = 0.0
    t_min: float = 0.0
    t_max: float = 1.0
    step: float = 1e-2
    charge: float = 0.0  # overdrive budget, A*s

    def interference(self, t):
        if self.waveform is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.sign * itf.value(self.waveform, t, self.shift)


# ---------------------------------------------------------------------------
# trigger paths
# ---------------------------------------------------------------------------


def _slope_path(ctx: CycleContext, t):
    t = np.asarray(t, dtype=float)
    return ctx.start + (ctx.ramp + ctx.method.m_s) * t + ctx.interference(t) - ctx.threshold


def filter_output(ctx: CycleContext, t):
    """Filtered sensor at cycle-local time t (canonical sign)."""
    t = np.asarray(t, dtype=float)
    tau = ctx.method.tau
    e = np.exp(-t / tau)
    y = ctx.filter_state * e + ctx.start * (1 - e) + ctx.ramp * (t - tau * (1 - e))
    if ctx.waveform is not None:
        y = y + ctx.sign * itf.filtered(ctx.waveform, t, tau, ctx.shift)
    return y


def _filter_path(ctx: CycleContext, t):
    return filter_output(ctx, t) - ctx.threshold


def _integrand(ctx: CycleContext, t):
    t = np.asarray(t, dtype=float)
    return ctx.start - ctx.threshold + ctx.ramp * t + ctx.interference(t)


def _area(ctx: CycleContext, t, t0):
    """Integral of the comparator input from t0 to t."""
    t = np.asarray(t, dtype=float)
    out = (ctx.start - ctx.threshold) * (t - t0) + 0.5 * ctx.ramp * (t * t - t0 * t0)
    if ctx.waveform is not None:
        out = out + ctx.sign * (itf.integral(ctx.waveform, t, ctx.shift)
                                - itf.integral(ctx.waveform, t0, ctx.shift))
    return out


def _xtol(ctx: CycleContext) -> float:
    return max(1e-15 * ctx.t_max, 1e-300)


def _chunks(ctx: CycleContext, lo: float):
    """Successive scan grids of ``_CHUNK`` points after ``lo``, ending at t_max."""
    h = ctx.step
    while lo < ctx.t_max:
        ts = lo + h * np.arange(1, _CHUNK + 1)
        if ts[-1] >= ctx.t_max:
            ts = np.append(ts[ts < ctx.t_max], ctx.t_max)
        yield lo, ts
        lo = float(ts[-1])


def _refine(fn, a: float, b: float, ctx: CycleContext) -> float:
    return brentq(fn, a, b, xtol=_xtol(ctx), rtol=4 * np.finfo(float).eps)


def _first_crossing(fn, ctx: CycleContext, t_lo: float) -> float:
    """First t >= t_lo with fn(t) >= 0, latched at the earliest grid bracket."""
    if float(fn(t_lo)) >= 0:
        return t_lo
    for lo, ts in _chunks(ctx, t_lo):
        g = fn(ts)
        hit = np.nonzero(g >= 0)[0]
        if hit.size:
            i = int(hit[0])
            a = lo if i == 0 else float(ts[i - 1])
            b = float(ts[i])
            if g[i] == 0:
                return b
            return _refine(lambda s: float(fn(s)), a, b, ctx)
    raise TriggerStarvation("comparator did not trigger within the cycle span")


def _overdrive_crossing(ctx: CycleContext) -> float:
    """First instant the clamped integrator reaches the charge budget.

    The clamp at zero makes the integrator output the running area minus
    its running minimum. The minimum is refined off-grid before the
    crossing itself is solved for.
    """
    t0 = ctx.method.blanking
    Q = ctx.charge
    area = lambda s: float(_area(ctx, s, t0))
    run_min, min_t = 0.0, t0
    for lo, ts in _chunks(ctx, t0):
        E = _area(ctx, ts, t0)
        prior = np.concatenate([[run_min], np.minimum.accumulate(np.minimum(E, run_min))])
        V = E - prior[1:]
        hit = np.nonzero(V >= Q)[0]
        if not hit.size:
            j = int(np.argmin(E))
            if E[j] < run_min:
                run_min, min_t = float(E[j]), float(ts[j])
            continue
        i = int(hit[0])
        j = int(np.argmin(E[: i + 1]))
        if E[j] < run_min:
            run_min, min_t = float(E[j]), float(ts[j])
        M, t_m = run_min, min_t
        if min_t > t0:
            h = ctx.step
            res = minimize_scalar(area, bounds=(max(t0, min_t - h), min(ctx.t_max, min_t + h)),
                                  method="bounded", options={"xatol": _xtol(ctx)})
            if res.fun < M:
                M, t_m = float(res.fun), float(res.x)
        fn = lambda s: area(s) - M - Q
        # the crossing lies after the minimum, where the clamp no longer acts
        grid = np.concatenate([[t_m], ts[: i + 1][ts[: i + 1] > t_m]])
        vals = np.array([area(grid[0])] + list(E[: i + 1][ts[: i + 1] > t_m])) - M
        k = int(np.nonzero(vals >= Q)[0][0])
        if k == 0:
            return float(grid[0])
        return _refine(fn, float(grid[k - 1]), float(grid[k]), ctx)
    raise TriggerStarvation("comparator integrator never reached its threshold")


def find_trigger(ctx: CycleContext) -> float:
    """Controlled-interval length ended by the first comparator event.

    Raises TriggerStarvation when no event happens before ``ctx.t_max``.
    """
    if isinstance(ctx.method, SlopeComp):
        t = _first_crossing(lambda s: _slope_path(ctx, s), ctx, ctx.t_min)
    elif isinstance(ctx.method, LowPassFilter):
        t = _first_crossing(lambda s: _filter_path(ctx, s), ctx, ctx.t_min)
    elif isinstance(ctx.method, OverdriveDelay):
        t = _overdrive_crossing(ctx) + ctx.method.t_d
        t = max(t, ctx.t_min)
        if t > ctx.t_max:
            raise TriggerStarvation("overdrive trigger falls beyond the cycle span")
    else:
        raise TypeError(f"unknown method {ctx.method!r}")
    return t


def _ideal_trigger(ctx: CycleContext) -> float:
    """Trigger instant of the same cycle without interference."""
    clean = replace(ctx, waveform=None, step=min(ctx.t_max / 64, max(ctx.step, ctx.t_max / 4096)))
    if isinstance(ctx.method, SlopeComp):
        t = (ctx.threshold - ctx.start) / (ctx.ramp + ctx.method.m_s)
        if t <= ctx.t_min:
            return ctx.t_min
        if t <= ctx.t_max:
            return t
    try:
        return find_trigger(clean)
    except TriggerStarvation:
        return math.nan


# ---------------------------------------------------------------------------
# steady state and simulation
# ---------------------------------------------------------------------------


def steady_state(config: ConverterConfig, scheme: ModulationScheme,
                 method: ConditioningMethod, i_command: float) -> InitState:
    """Interference-free periodic steady state for a constant command."""
    geo = geometry(config, scheme)
    s, m, T = geo.sign, geo.ramp, geo.nominal
    Tu = geo.uncontrolled(T)
    xc = s * i_command
    if isinstance(method, SlopeComp):
        xe = xc - method.m_s * T
        return InitState(s * xe, None, T)
    if isinstance(method, LowPassFilter):
        tau = method.tau
        d = math.exp(-T / tau)
        b = d * math.exp(-Tu / tau)
        xs = (xc * (1 - b) - m * (T - tau * (1 - d))) / (1 - d)
        return InitState(s * (xs + m * T), i_command, T)
    if isinstance(method, OverdriveDelay):
        Q = method.charge(config.r_sense)
        t_trig = T - method.t_d
        tb = method.blanking
        delay = math.sqrt(2 * Q / m)
        t0 = t_trig - delay
        if t0 >= tb:
            xs = xc - m * t0
        else:
            span = t_trig - tb
            if span <= 0:
                raise TriggerStarvation("blanking plus delay exceed the nominal interval")
            xs = xc + (Q - 0.5 * m * (t_trig ** 2 - tb ** 2)) / span
        return InitState(s * (xs + m * T), None, T)
    raise TypeError(f"unknown method {method!r}")


def _time_step(geo, interference: Optional[InterferenceSpec], points_per_period: int) -> float:
    h = geo.nominal / 100
    if interference is not None and interference.waveform is not None:
        h = min(h, itf.time_step(interference.waveform, points_per_period))
    return h


def run_cycles(config: ConverterConfig, scheme: ModulationScheme,
               interference: Optional[InterferenceSpec], method: ConditioningMethod,
               i_command_sequence: Sequence[float], n_cycles: int,
               init_state: Optional[InitState] = None, *, dense: bool = False,
               deviation: bool = True, points_per_period: int = 200,
               stop_when_converged: bool = False, converge_rtol: float = 1e-10
               ) -> SimTrace:
    """Simulate ``n_cycles`` switching cycles.

    ``i_command_sequence`` has length 1 (constant command) or ``n_cycles``.
    Starts from the interference-free steady state of the first command
    unless ``init_state`` is given. Divergence ends the run early with
    ``terminated_by='diverged'``; a missing trigger raises TriggerStarvation
    except under fixed frequency, where the duty limit is applied and
    flagged on the sample.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    cmds = np.asarray(i_command_sequence, dtype=float).ravel()
    if cmds.size == 1:
        cmds = np.full(n_cycles, cmds[0])
    elif cmds.size != n_cycles:
        raise ValueError("command sequence must have length 1 or n_cycles")

    geo = geometry(config, scheme)
    s, m = geo.sign, geo.ramp
    if isinstance(method, LowPassFilter) and s < 0 and geo.t_min <= 0:
        # the filter output decays toward zero, past the valley command, while
        # the sensor is blind, so the comparator would fire at once
        raise ValidationError("scheme.t_on_min", "valley control with a filter needs a "
                              "positive minimum interval")
    if init_state is None:
        init_state = steady_state(config, scheme, method, cmds[0])
    xe_prev = s * init_state.i_extremum
    t_prev = init_state.t_prev if init_state.t_prev is not None else geo.nominal
    y_end = s * (init_state.filter_state if init_state.filter_state is not None else cmds[0])
    wf = interference.waveform if interference is not None else None
    h = _time_step(geo, interference, points_per_period)
    charge = method.charge(config.r_sense) if isinstance(method, OverdriveDelay) else 0.0
    scale = max(float(np.max(np.abs(cmds))), m * geo.nominal)

    samples: List[CycleSample] = []
    dense_t: List[float] = []
    dense_i: List[float] = []
    t_abs = 0.0
    terminated = "cycle_budget"
    steady_count = 0
    for n in range(n_cycles):
        tu_prev = geo.uncontrolled(t_prev)
        xs = xe_prev - geo.fall * tu_prev
        shift = itf.cycle_shift(interference, n, t_abs) if wf is not None else 0.0
        y0 = y_end * math.exp(-tu_prev / method.tau) if isinstance(method, LowPassFilter) else 0.0
        ctx = CycleContext(ramp=m, start=xs, threshold=s * cmds[n], method=method, waveform=wf,
                           sign=s, shift=shift, filter_state=y0, t_min=geo.t_min,
                           t_max=geo.t_max, step=h, charge=charge)
        saturated = False
        try:
            t_c = find_trigger(ctx)
        except TriggerStarvation:
            if not geo.saturates:
                raise
            t_c, saturated = geo.t_max, True
        xe = xs + m * t_c
        dev = t_c - _ideal_trigger(ctx) if deviation else math.nan
        if isinstance(method, LowPassFilter):
            y_end = float(filter_output(ctx, t_c))
        samples.append(CycleSample(n, t_c, s * xe, float(cmds[n]), dev, saturated))
        if dense:
            dense_t += [t_abs, t_abs + t_c]
            dense_i += [s * xs, s * xe]
        t_abs += t_c + geo.uncontrolled(t_c)
        if not math.isfinite(xe) or abs(xe) > DIVERGENCE_FACTOR * scale:
            terminated = "diverged"
            break
        if n > 0 and cmds[n] == cmds[n - 1] and abs(xe - xe_prev) <= converge_rtol * scale:
            steady_count += 1
        else:
            steady_count = 0
        xe_prev, t_prev = xe, t_c
        if stop_when_converged and steady_count >= 8 and np.all(cmds[n:] == cmds[n]):
            terminated = "converged"
            break
    else:
        if steady_count >= 8:
            terminated = "converged"

    if dense and terminated != "diverged":
        dense_t.append(t_abs)
        dense_i.append(s * (xe_prev - geo.fall * geo.uncontrolled(t_prev)))
    final = InitState(s * xe_prev, s * y_end if isinstance(method, LowPassFilter) else None, t_prev)
    dw = (np.array(dense_t), np.array(dense_i)) if dense else None
    return SimTrace(samples, dw, terminated, final)


def step_test(config, scheme, interference, method, i_before: float, i_after: float,
              n_before: int = 200, n_after: int = 200, **kw):
    """Settle at ``i_before`` then step the command. Returns (trace, step_index)."""
    pre = run_cycles(config, scheme, interference, method, [i_before], n_before,
                     deviation=False, **kw)
    if pre.terminated_by == "diverged":
        return pre, None
    post = run_cycles(config, scheme, interference, method, [i_after], n_after,
                      init_state=pre.final_state, deviation=False, **kw)
    # keep the last pre-step sample so the step is visible in the trace
    last = pre.samples[-1]
    samples = [replace(last, n=-1)] + post.samples
    return SimTrace(samples, None, post.terminated_by, post.final_state), 1


def static_mapping(config: ConverterConfig, scheme: ModulationScheme,
                   interference: Optional[InterferenceSpec], method: ConditioningMethod,
                   i_c_grid: Sequence[float], init_state: Optional[InitState] = None,
                   cycle_index: int = 0, points_per_period: int = 400):
    """Command-to-trigger-time map of a single cycle from a fixed initial state.

    The default initial state is the interference-free steady state at the
    median command of the grid.
    """
    grid = np.asarray(i_c_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    geo = geometry(config, scheme)
    s, m = geo.sign, geo.ramp
    if init_state is None:
        init_state = steady_state(config, scheme, method, float(np.median(grid)))
    t_prev = init_state.t_prev if init_state.t_prev is not None else geo.nominal
    tu = geo.uncontrolled(t_prev)
    xs = s * init_state.i_extremum - geo.fall * tu
    y_prev = init_state.filter_state if init_state.filter_state is not None else float(np.median(grid))
    y0 = s * y_prev * math.exp(-tu / method.tau) if isinstance(method, LowPassFilter) else 0.0
    wf = interference.waveform if interference is not None else None
    shift = itf.cycle_shift(interference, cycle_index, 0.0) if wf is not None else 0.0
    h = _time_step(geo, interference, points_per_period)
    charge = method.charge(config.r_sense) if isinstance(method, OverdriveDelay) else 0.0
    out = []
    for ic in grid:
        ctx = CycleContext(ramp=m, start=xs, threshold=s * ic, method=method, waveform=wf, sign=s,
                           shift=shift, filter_state=y0, t_min=geo.t_min, t_max=geo.t_max,
                           step=h, charge=charge)
        out.append((float(ic), find_trigger(ctx)))
    return out


def max_gap(mapping) -> float:
    """Largest jump in trigger time between adjacent grid commands."""
    t = np.array([p[1] for p in mapping])
    return float(np.max(np.abs(np.diff(t)))) if t.size > 1 else 0.0
