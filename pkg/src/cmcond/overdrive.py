"""Comparator-overdrive-delay conditioning.

The comparator is modelled as a transconductor charging a capacitor that is
held in reset until the input goes positive, so its voltage is the running
area of ``i_sensor - i_c`` minus the running minimum of that area. It fires
once the stored charge reaches ``V_trig*tau_c`` (current-referred:
``V_trig*tau_c/R_s``) and the output follows after a fixed delay ``t_d``.

Charges in this module are current-referred, in A*s.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import interference as itf
from . import sim
from .metrics import PoleRange, UnstableRange, overshoot, settling_cycles
from .types import (
    ConverterConfig,
    InterferenceSpec,
    ModulationScheme,
    OverdriveDelay,
    ValidationError,
    geometry,
)


class InsufficientOverdrive(ValueError):
    """The comparator time constant is too small for the linear feedback-gain bounds."""


class RankDeficientFit(ValueError):
    pass


@dataclass(frozen=True)
class ComparatorModel:
    tau_c: float
    v_trig: float
    t_d: float = 0.0
    blanking: float = 0.0

    def __post_init__(self):
        if self.tau_c <= 0 or self.v_trig <= 0:
            raise ValidationError("comparator", "tau_c and v_trig must be positive")
        if self.t_d < 0 or self.blanking < 0:
            raise ValidationError("comparator", "t_d and blanking must be non-negative")

    @property
    def method(self) -> OverdriveDelay:
        return OverdriveDelay(self.tau_c, self.v_trig, self.t_d, self.blanking)

    def charge(self, r_sense: float) -> float:
        return self.v_trig * self.tau_c / r_sense

    def region_boundaries(self, ramp_slope: float, a_ub: float, i_valley: float,
                          i_command: float) -> Tuple[float, float, float]:
        """(t_a, t_b, t_d') dividing blanking, subthreshold, threshold and overdrive.

        ``t_b`` is where the upper envelope ``i_v + m t + A`` can first reach
        the command, ``t_d'`` where the lower envelope must have.
        """
        gap = i_command - i_valley
        t_a = self.blanking
        t_b = max(t_a, (gap - a_ub) / ramp_slope)
        t_e = max(t_b, (gap + a_ub) / ramp_slope)
        return t_a, t_b, t_e


def _coerce_spec(interference) -> Optional[InterferenceSpec]:
    if interference is None or isinstance(interference, InterferenceSpec):
        return interference
    return itf.make_spec(interference)


def _context(ramp_slope, i_valley, i_command, model: ComparatorModel, r_sense, waveform,
             shift=0.0, t_max=None, offset=0.0):
    gap = max(i_command - i_valley, 0.0)
    if t_max is None:
        t_max = 20 * (gap / ramp_slope + math.sqrt(2 * model.charge(r_sense) / ramp_slope)
                      + model.t_d + model.blanking) + 1e-12
    h = t_max / 4000
    if waveform is not None:
        h = min(h, itf.time_step(waveform, 200))
    return sim.CycleContext(ramp=ramp_slope, start=i_valley + offset, threshold=i_command,
                            method=model.method, waveform=waveform, sign=1, shift=shift,
                            t_max=t_max, step=h, charge=model.charge(r_sense))


def overdrive_trigger_time(ramp_slope: float, interference, i_valley: float,
                           i_command: float, model: ComparatorModel, r_sense: float = 1.0,
                           shift: float = 0.0, t_max: Optional[float] = None) -> float:
    """Trigger instant measured from the start of the ramp (delay included).

    ``interference`` may be a waveform, a spec or None. Uses the simulator's
    comparator path, so the two always agree.
    """
    spec = _coerce_spec(interference)
    wf = spec.waveform if spec is not None else None
    return sim.find_trigger(_context(ramp_slope, i_valley, i_command, model, r_sense, wf,
                                     shift, t_max))


def envelope_bounds(ramp_slope: float, a_ub: float, i_valley: float, i_command: float,
                    model: ComparatorModel, r_sense: float = 1.0) -> Tuple[float, float]:
    """Earliest and latest possible trigger under any interference bounded by ``a_ub``.

    The clamped integrator is monotone in its input, so the triggers for the
    sensor shifted by ``+a_ub`` and ``-a_ub`` bracket every admissible one.
    """
    early = sim.find_trigger(_context(ramp_slope, i_valley, i_command, model, r_sense, None,
                                      offset=a_ub))
    late = sim.find_trigger(_context(ramp_slope, i_valley, i_command, model, r_sense, None,
                                     offset=-a_ub))
    return early, late


# ---------------------------------------------------------------------------
# design formulas
# ---------------------------------------------------------------------------


def _a_b(interference) -> Tuple[float, float]:
    if isinstance(interference, InterferenceSpec):
        return interference.a_ub, interference.b_functional
    if interference is None:
        return 0.0, 0.0
    return itf.amplitude_bound(interference), itf.b_functional(interference)


def stability_bound(m1: float, interference) -> float:
    """Smallest current-referred charge ``4A^2/m1 + B`` certifying global stability."""
    a, b = _a_b(interference)
    return 4 * a * a / m1 + b


def max_overdrive_delay(m1: float, interference, v_trig_tau: float) -> float:
    """Upper bound on the overdrive delay for the current-referred charge ``v_trig_tau``."""
    a, b = _a_b(interference)
    r = a / m1
    return r + math.sqrt(r * r + 2 * (v_trig_tau + b) / m1)


def psi_and_pole_range(m1: float, a_hat: float, omega_hat: float, tau_hat: float):
    """Bounds of the linear feedback gain and the resulting pole range."""
    excess = tau_hat - (a_hat / omega_hat if a_hat > 0 else 0.0)
    if excess <= 0:
        raise InsufficientOverdrive("tau_hat must exceed a_hat/omega_hat")
    if a_hat == 0:
        return 0.0, 0.0, PoleRange(0.0, 0.0)
    root = math.sqrt(1 + excess / a_hat ** 2)
    psi_min = -2 * m1 / (1 + root)
    psi_max = 2 * m1 / (root - 1)
    rng = PoleRange(psi_min / (m1 + psi_min), psi_max / (m1 + psi_max))
    return psi_min, psi_max, rng


def fit_datasheet_delay(samples: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Least-squares fit of ``t_od = p1/V_od + p2``. Returns ``(p1, p2)``."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
        raise RankDeficientFit("need at least two (overdrive, delay) pairs")
    if np.any(data[:, 0] <= 0):
        raise ValidationError("overdrive", "overdrive voltages must be positive")
    X = np.column_stack([1 / data[:, 0], np.ones(len(data))])
    coef, _, rank, _ = np.linalg.lstsq(X, data[:, 1], rcond=None)
    if rank < 2:
        raise RankDeficientFit("overdrive values must not all be equal")
    return float(coef[0]), float(coef[1])


def _hats(config: ConverterConfig, scheme: ModulationScheme, interference, charge):
    geo = geometry(config, scheme)
    m, T = geo.ramp, geo.nominal
    a, _ = _a_b(interference)
    om = interference.omega_l if isinstance(interference, InterferenceSpec) else itf.lowest_omega(interference)
    return a / (m * T), om * T / (2 * math.pi), charge / (m * T * T / 2)


# ---------------------------------------------------------------------------
# numeric linearization
# ---------------------------------------------------------------------------


def periodic_state(config, scheme, interference, method, i_command, n_max=2000):
    """Steady state reached from the interference-free one (fixed phase)."""
    tr = sim.run_cycles(config, scheme, interference, method, [i_command], n_max,
                        deviation=False, stop_when_converged=True)
    if tr.terminated_by != "converged":
        raise RuntimeError(f"no period-1 steady state ({tr.terminated_by})")
    return tr.final_state


def numeric_psi(config: ConverterConfig, scheme: ModulationScheme,
                interference: Optional[InterferenceSpec], method: OverdriveDelay,
                i_command: float, rel_step: float = 1e-6):
    """Linear feedback gain from a secant of the one-cycle map. Returns (psi, pole)."""
    geo = geometry(config, scheme)
    if geo.fixed_interval is None:
        raise ValueError("secant linearization covers the variable-frequency schemes")
    ss = periodic_state(config, scheme, interference, method, i_command)
    delta = rel_step * geo.ramp * geo.nominal
    ext = []
    for sgn in (1, -1):
        init = sim.InitState(ss.i_extremum + sgn * delta, None, ss.t_prev)
        tr = sim.run_cycles(config, scheme, interference, method, [i_command], 1,
                            init_state=init, deviation=False)
        ext.append(tr.samples[0].i_extremum)
    a = (ext[0] - ext[1]) / (2 * delta)
    # one-cycle pole a = psi/(m + psi)
    psi = a * geo.ramp / (1 - a)
    return psi, a


# ---------------------------------------------------------------------------
# sizing
# ---------------------------------------------------------------------------


@dataclass
class OverdriveDesignReport:
    continuous_certified: str
    gas_stable: bool
    tau_c: float
    charge: float
    t_od_max: float
    t_on_min: float
    psi_range: Optional[Tuple[float, float]]
    pole_range: Optional[Tuple[float, float]]
    n_w: Optional[float]
    o_w: Optional[float]
    feasible: bool = True
    reason: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def design_point(config: ConverterConfig, scheme: ModulationScheme, interference,
                 v_trig: float, tau_c: float):
    """Certificates, delay bound and pole range of a given comparator."""
    geo = geometry(config, scheme)
    m = geo.ramp
    q = v_trig * tau_c / config.r_sense
    stable = q >= stability_bound(m, interference)
    t_od = max_overdrive_delay(m, interference, q)
    a_hat, w_hat, tau_hat = _hats(config, scheme, interference, q)
    try:
        pmin, pmax, rng = psi_and_pole_range(m, a_hat, w_hat, tau_hat)
        psi, poles = (pmin, pmax), (rng.a_min, rng.a_max)
        try:
            n_w = settling_cycles(rng)
        except UnstableRange:
            n_w = math.inf
        o_w = overshoot(rng)
    except InsufficientOverdrive:
        psi = poles = n_w = o_w = None
    return OverdriveDesignReport("not-evaluable", bool(stable), tau_c, q, t_od, t_od,
                                 psi, poles, n_w, o_w)


def size_for_speed(config: ConverterConfig, scheme: ModulationScheme, interference,
                   v_trig: float, margin: float = 0.05) -> OverdriveDesignReport:
    """Smallest comparator time constant with margin, and the on-time floor it implies.

    The charge is taken at the global-stability boundary times ``1 + margin``,
    raised if needed so the feedback-gain bounds exist. The delay bound then
    sets the minimum on-time; a floor beyond the nominal controlled interval
    is reported as infeasible.
    """
    geo = geometry(config, scheme)
    m, T = geo.ramp, geo.nominal
    a, b = _a_b(interference)
    a_hat, w_hat, _ = _hats(config, scheme, interference, 1.0)
    q_psi = (a_hat / w_hat if a_hat > 0 else 0.0) * m * T * T / 2
    q = (1 + margin) * max(stability_bound(m, interference), q_psi)
    if q <= 0:
        # nothing to reject: an ideal comparator is already deadbeat
        return OverdriveDesignReport("not-evaluable", True, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0),
                                     (0.0, 0.0), 0.0, 0.0)
    tau_c = q * config.r_sense / v_trig
    rep = design_point(config, scheme, interference, v_trig, tau_c)
    if rep.t_on_min > T:
        rep.feasible = False
        rep.reason = (f"required minimum on-time {rep.t_on_min:.6g} s exceeds the "
                      f"controlled interval {T:.6g} s")
    return rep


def sweep(config, scheme, interference, v_trig: float, tau_grid: Sequence[float]):
    """Design-diagram rows (tau_hat, n_w, o_w, t_od_max_hat, gas_stable)."""
    geo = geometry(config, scheme)
    rows = []
    for tau_c in tau_grid:
        rep = design_point(config, scheme, interference, v_trig, tau_c)
        tau_hat = float(f"{rep.charge / (geo.ramp * geo.nominal ** 2 / 2):.12g}")
        rows.append((tau_hat, rep.n_w, rep.o_w, rep.t_od_max / geo.nominal, rep.gas_stable))
    return rows
