"""First-order low-pass filter conditioning.

The filter ``h(t) = exp(-t/tau)/tau`` sits between the current sensor and the
comparator. The sensor reads zero while the uncontrolled switch conducts, so
the filtered value left at the trigger decays by ``exp(-T_u/tau)`` before
the next cycle starts.

Large-signal certificates hold for constant off-time only. The linearized
loop is available for every scheme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from . import interference as itf
from .metrics import (
    DiscreteTF,
    PoleRange,
    UnstableRange,
    measure_transient,
    overshoot,
    settling_cycles,
    step_metrics,
)
from .types import (
    ConverterConfig,
    InterferenceSpec,
    LowPassFilter,
    ModulationScheme,
    geometry,
)


class OutOfTheoremScope(ValueError):
    pass


# ---------------------------------------------------------------------------
# certificates (normalized form)
# ---------------------------------------------------------------------------


def _bd(tau_hat, t_on_min_hat, t_off_hat):
    d = math.exp(-t_on_min_hat / tau_hat)
    b = math.exp(-(t_on_min_hat + t_off_hat) / tau_hat)
    return b, d


def continuity_lhs(a_hat, omega_hat, tau_hat, t_on_min_hat, i_max_hat, t_off_hat=1.0) -> float:
    """Left side of the continuity certificate; continuous when below 1."""
    if tau_hat <= 0:
        return math.inf
    b, d = _bd(tau_hat, t_on_min_hat, t_off_hat)
    if d >= 1:
        return math.inf
    atten = 1 / math.sqrt(1 + (2 * math.pi * omega_hat * tau_hat) ** 2)
    return (a_hat / ((1 - d) * tau_hat)) * (1 + d * atten) + b * i_max_hat / ((1 - d) * tau_hat)


def stability_lhs(a_hat, omega_hat, tau_hat, t_on_min_hat, i_max_hat, t_off_hat=1.0):
    """Both left sides of the stability certificate; stable when each is below 1/2."""
    if tau_hat <= 0:
        return math.inf, math.inf
    b, d = _bd(tau_hat, t_on_min_hat, t_off_hat)
    if d >= 1:
        return math.inf, math.inf
    atten = 1 / math.sqrt(1 + (2 * math.pi * omega_hat * tau_hat) ** 2)
    k0 = d * (t_on_min_hat + tau_hat * d - tau_hat) / (1 - d) ** 2
    k1 = 1 / (1 - d)
    k2 = 1 + (1 + d) * d / (1 - d) ** 2
    k3 = (d - b) / (1 - d) ** 2
    first = k0 / tau_hat + k1 * a_hat / tau_hat + k2 * a_hat * atten / tau_hat
    second = k3 * i_max_hat / tau_hat + a_hat / tau_hat + a_hat * atten / tau_hat
    return first, second


def _hats(config, scheme, interference, tau, i_max):
    if scheme.kind != "constant_off_time":
        raise OutOfTheoremScope("the filter certificates cover constant off-time only")
    geo = geometry(config, scheme)
    m, T = geo.ramp, geo.nominal
    return dict(
        a_hat=interference.a_ub / (m * T),
        omega_hat=interference.omega_l * T / (2 * math.pi),
        tau_hat=tau / T,
        t_on_min_hat=scheme.t_on_min / T,
        i_max_hat=i_max / (m * T),
        t_off_hat=geo.fixed_interval / T,
    )


def continuity_condition(config: ConverterConfig, scheme: ModulationScheme,
                         interference: InterferenceSpec, tau: float, i_max: float) -> bool:
    return continuity_lhs(**_hats(config, scheme, interference, tau, i_max)) < 1


def stability_condition(config: ConverterConfig, scheme: ModulationScheme,
                        interference: InterferenceSpec, tau: float, i_max: float) -> bool:
    first, second = stability_lhs(**_hats(config, scheme, interference, tau, i_max))
    return first < 0.5 and second < 0.5


# ---------------------------------------------------------------------------
# operating point and linearization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    """Steady state of the filtered loop (physical currents, controlled interval)."""

    i_c: float
    i_p: float
    i_v: float
    t_on: float


def _canon_start_end(op: OperatingPoint, sign: int):
    # peak control starts the controlled interval at the valley; valley control at the peak
    if sign > 0:
        return op.i_v, op.i_p
    return -op.i_p, -op.i_v


def operating_point(config: ConverterConfig, scheme: ModulationScheme,
                    interference: Optional[InterferenceSpec], tau: float,
                    i_c: Optional[float] = None, i_avg: Optional[float] = None
                    ) -> OperatingPoint:
    """Steady state with switching-synchronous interference.

    The controlled interval settles at its nominal value whatever the
    interference, so only the current levels move. Give either the command
    or the average inductor current (default: the load current).
    """
    geo = geometry(config, scheme)
    s, m, T = geo.sign, geo.ramp, geo.nominal
    Tu = geo.uncontrolled(T)
    d = math.exp(-T / tau)
    b = d * math.exp(-Tu / tau)
    wf = interference.waveform if interference is not None else None
    wT = s * float(itf.filtered(wf, T, tau)) if wf is not None else 0.0
    ramp_part = m * (T - tau * (1 - d))
    if i_c is None:
        if i_avg is None:
            i_avg = config.i_load
        xs = s * i_avg - m * T / 2
        xc = (xs * (1 - d) + ramp_part + wT) / (1 - b)
        i_c = s * xc
    xc = s * i_c
    xs = (xc * (1 - b) - ramp_part - wT) / (1 - d)
    xe = xs + m * T
    lo, hi = sorted((s * xs, s * xe))
    return OperatingPoint(i_c=float(i_c), i_p=hi, i_v=lo, t_on=T)


@dataclass(frozen=True)
class FilterLoopLinearization:
    c1: float
    c2: float
    k_gain: float
    f_zero: float
    d: float
    psi1: float
    psi2: float
    pole: float
    beta: float
    closed_loop: DiscreteTF
    poles: tuple

    @property
    def small_signal_stable(self) -> bool:
        return all(abs(p) < 1 for p in self.poles)


def psi1_time_domain(wf, t_on: float, tau: float, sign: int = 1) -> float:
    """Slope of the filtered interference at the nominal trigger instant.

    Uses ``d/dt (w u * h) = (w - w u * h)/tau``.
    """
    if wf is None:
        return 0.0
    w = float(itf.value(wf, t_on))
    y = float(itf.filtered(wf, t_on, tau))
    return sign * (w - y) / tau


def _psi1_kernel(omega, W, t_on, tau):
    d = math.exp(-t_on / tau)
    return (1j * omega * W * np.exp(1j * omega * t_on) + (d / tau) * W) / (1 + 1j * omega * tau)


def _fourier_quad(rational, theta: float, knee: float) -> float:
    """``integral over the real line of Re(R(w) exp(j w theta))`` for a conjugate-symmetric R.

    The resonant band ``[0, knee]`` is cut into pieces with oscillatory
    weights; the tail goes through QUADPACK's Fourier-integral routine.
    """
    re = lambda x: float(np.real(rational(x)))
    im = lambda x: float(np.imag(rational(x)))
    a = abs(theta)
    edges = np.linspace(0.0, knee, 65)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if a == 0:
            total += quad(re, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
        else:
            total += quad(re, lo, hi, weight="cos", wvar=a, epsabs=0, epsrel=1e-12, limit=200)[0]
            total -= math.copysign(1.0, theta) * quad(
                im, lo, hi, weight="sin", wvar=a, epsabs=0, epsrel=1e-12, limit=200)[0]
    if a == 0:
        total += quad(re, knee, np.inf, epsabs=0, epsrel=1e-12, limit=400)[0]
    else:
        total += quad(re, knee, np.inf, weight="cos", wvar=a, limlst=200)[0]
        total -= math.copysign(1.0, theta) * quad(im, knee, np.inf, weight="sin", wvar=a, limlst=200)[0]
    return 2 * total


def _ring_psi1(leaf, t_on, tau):
    if leaf.decay <= 0:
        raise itf.NonIntegrableSpectrum("an undamped ring has spectral lines on the real axis")
    d = math.exp(-t_on / tau)
    base = lambda x: itf.ring_spectrum(leaf, x) * np.exp(1j * x * leaf.start_time) / (1 + 1j * x * tau)
    knee = 8 * (leaf.omega + leaf.decay + 1 / tau)
    with warnings.catch_warnings():
        # QUADPACK flags slow tails even when the banded sum is accurate
        warnings.simplefilter("ignore", IntegrationWarning)
        first = _fourier_quad(lambda x: 1j * x * base(x), t_on - leaf.start_time, knee)
        second = _fourier_quad(lambda x: (d / tau) * base(x), -leaf.start_time, knee)
    return first + second


def psi1_spectral(wf, t_on: float, tau: float, sign: int = 1, n_lines: int = 20000) -> float:
    """The same slope from the interference spectrum.

    Line spectra are summed in closed form; rings are integrated over their
    continuous spectrum with adaptive quadrature.
    """
    total = 0.0
    for leaf in itf._leaves(wf):
        if isinstance(leaf, itf.Sinusoid):
            om, W = itf.line_spectrum(leaf)
            total += float(np.real(np.sum(_psi1_kernel(om, W, t_on, tau))))
        elif isinstance(leaf, itf.Trapezoid):
            om, amp = itf.trapezoid_lines(leaf, n_lines)
            # cosine series about the middle of the rise, then shifted to the phase
            k = om / leaf.omega
            sgn = np.where(np.sinc(k * leaf.omega * leaf.rise_time / 2 / math.pi) >= 0, 1.0, -1.0)
            t_mid = leaf.rise_time / 2 - leaf.phase / leaf.omega
            W = 0.5 * amp * sgn * np.exp(-1j * om * t_mid) * (-1j)
            pos = _psi1_kernel(om, W, t_on, tau)
            total += float(2 * np.real(np.sum(pos)))
        else:
            total += _ring_psi1(leaf, t_on, tau)
    return sign * total


def psi2(geo, op: OperatingPoint, tau: float) -> float:
    """Feedback through the trapezoidal sensor shape (canonical sign)."""
    xs, _ = _canon_start_end(op, geo.sign)
    xc = geo.sign * op.i_c
    d = math.exp(-op.t_on / tau)
    b = d * math.exp(-geo.uncontrolled(op.t_on) / tau)
    return (d / tau) * xs - (b / tau) * xc


def linearize(config: ConverterConfig, scheme: ModulationScheme,
              interference: Optional[InterferenceSpec], tau: float,
              op: Optional[OperatingPoint] = None, *, psi1: Optional[float] = None
              ) -> FilterLoopLinearization:
    """Small-signal command-to-extremum loop around a steady state.

    The interference enters with the phase it has in its (fixed-mode) spec,
    unless ``psi1`` is given explicitly.
    For fixed frequency the decay of the carried filter state depends on the
    previous interval, which adds a second pole.
    """
    geo = geometry(config, scheme)
    if op is None:
        op = operating_point(config, scheme, interference, tau)
    s, m, T = geo.sign, geo.ramp, op.t_on
    d = math.exp(-T / tau)
    b = d * math.exp(-geo.uncontrolled(T) / tau)
    wf = interference.waveform if interference is not None else None
    p1 = psi1_time_domain(wf, T, tau, s) if psi1 is None else float(psi1)
    p2 = psi2(geo, op, tau)
    c1 = 1 - d
    P = m * (1 - d) + p1 + p2
    if geo.fixed_interval is not None:
        a = 1 - m * (1 - d) / P
        beta = m / P
        tf = DiscreteTF([beta, -beta * b], [1.0, -a])
        poles = (a,)
    else:
        xc = s * op.i_c
        Qc = (b / tau) * xc
        mu = geo.fall
        den = [P, Qc - P + (1 - d) * (m + mu), -Qc]
        num = [m, mu - b * m, -b * mu]
        tf = DiscreteTF(num, den)
        poles = tuple(complex(p) if abs(np.imag(p)) > 1e-14 else float(np.real(p))
                      for p in tf.poles())
        a = max(poles, key=abs)
        a = float(np.real(a)) if not isinstance(a, complex) else a
        beta = m / P
    return FilterLoopLinearization(
        c1=c1, c2=p1 + p2, k_gain=1 / (1 - d), f_zero=b, d=d, psi1=p1, psi2=p2,
        pole=a, beta=beta, closed_loop=tf, poles=poles,
    )


def psi1_bound(a_ub: float, omega: float, tau: float, t_on: float) -> float:
    """Largest |psi1| a sinusoid of amplitude ``a_ub`` at ``omega`` can produce."""
    d = math.exp(-t_on / tau)
    return a_ub * (omega + d / tau) / math.sqrt(1 + (omega * tau) ** 2)


def class_metrics(config: ConverterConfig, scheme: ModulationScheme, a_ub: float,
                  omega: float, tau: float, i_avg: Optional[float] = None, n_response: int = 600):
    """Worst exact-step metrics with psi1 at either end of its class bound.

    Returns ``(n_w, o_w, stable)`` with fractional settling; unstable ends
    give infinities.
    """
    op = operating_point(config, scheme, None, tau, i_avg=i_avg)
    bound = psi1_bound(a_ub, omega, tau, op.t_on)
    n_w = o_w = 0.0
    for p1 in (-bound, bound):
        try:
            lin = linearize(config, scheme, None, tau, op, psi1=p1)
        except ValueError:
            return math.inf, math.inf, False
        if not lin.small_signal_stable:
            return math.inf, math.inf, False
        mt = step_metrics(lin.closed_loop, n_response)
        n_w = max(n_w, mt.n_settle_fractional)
        o_w = max(o_w, mt.overshoot)
    return n_w, o_w, True


# ---------------------------------------------------------------------------
# design diagram
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    tau_hat: float
    n_w_theory: float
    o_w_theory: float
    n_w_sim: float
    o_w_sim: float
    stable: bool
    n_w_pole: float
    o_w_pole: float
    a_min: float
    a_max: float
    small_signal_stable: bool

    def to_json(self) -> dict:
        return asdict(self)


def phase_shifts(interference: Optional[InterferenceSpec], n_phases: int) -> List[float]:
    if interference is None or interference.waveform is None or n_phases <= 1:
        return [0.0]
    # rings are locked to the switching edge; only periodic waveforms drift in phase
    if any(isinstance(leaf, itf.DampedRing) for leaf in itf._leaves(interference.waveform)):
        return [0.0]
    period = 2 * math.pi / interference.omega_l
    return list(np.arange(n_phases) * period / n_phases)


def worst_case(config, scheme, interference, tau, n_phases=16, i_avg=None, n_response=600):
    """Worst-case exact-step and pole-only metrics over interference phases."""
    geo = geometry(config, scheme)
    n_w = o_w = 0.0
    poles = []
    stable = True
    for sh in phase_shifts(interference, n_phases):
        spec = None
        if interference is not None and interference.waveform is not None:
            spec = itf.with_waveform(interference, itf.shifted(interference.waveform, sh))
        op = operating_point(config, scheme, spec, tau, i_avg=i_avg)
        lin = linearize(config, scheme, spec, tau, op)
        poles.extend(np.real(lin.poles) if geo.fixed_interval is None else [lin.pole])
        if not lin.small_signal_stable:
            stable = False
            n_w = o_w = math.inf
            continue
        if math.isfinite(n_w):
            mt = step_metrics(lin.closed_loop, n_response)
            n_w = max(n_w, float(mt.n_settle))
            o_w = max(o_w, mt.overshoot)
    rng = PoleRange(float(min(poles)), float(max(poles)))
    try:
        n_pole = settling_cycles(rng)
    except UnstableRange:
        n_pole = math.inf
    return n_w, o_w, n_pole, overshoot(rng), rng, stable


def simulated_worst_case(config, scheme, interference, tau, n_phases=16, i_avg=None,
                         step_fraction=1e-3, n_before=300, n_after=300):
    """Measured settling/overshoot of small command steps, worst over phases."""
    from .sim import step_test

    method = LowPassFilter(tau)
    n_w = o_w = 0.0
    for sh in phase_shifts(interference, n_phases):
        spec = None
        if interference is not None and interference.waveform is not None:
            spec = itf.with_waveform(interference, itf.shifted(interference.waveform, sh))
        op = operating_point(config, scheme, spec, tau, i_avg=i_avg)
        trace, k = step_test(config, scheme, spec, method, op.i_c, op.i_c * (1 + step_fraction),
                             n_before, n_after)
        if k is None or trace.terminated_by == "diverged":
            return math.inf, math.inf
        mt = measure_transient(trace, step_index=k)
        if mt.saturated:
            return math.inf, math.inf
        n_w = max(n_w, float(mt.n_settle))
        o_w = max(o_w, mt.overshoot)
    return n_w, o_w


def design_sweep(config: ConverterConfig, scheme: ModulationScheme,
                 interference: Optional[InterferenceSpec], tau_grid: Sequence[float],
                 i_max: Optional[float] = None, *, n_phases: int = 16,
                 simulate: bool = False, i_avg: Optional[float] = None) -> List[SweepRow]:
    """Theory (and optionally simulation) metrics across filter time constants."""
    geo = geometry(config, scheme)
    grid = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("tau grid must be sorted")
    rows = []
    bounds = interference if interference is not None else itf.zero_spec()
    for tau in grid:
        n_w, o_w, n_p, o_p, rng, ss = worst_case(config, scheme, interference, tau, n_phases, i_avg)
        if scheme.kind == "constant_off_time":
            op = operating_point(config, scheme, None, tau, i_avg=i_avg)
            imax = i_max if i_max is not None else op.i_p
            stable = stability_condition(config, scheme, bounds, tau, imax)
        else:
            stable = ss
        if simulate and ss:
            n_s, o_s = simulated_worst_case(config, scheme, interference, tau, n_phases, i_avg)
        else:
            n_s = o_s = math.nan
        rows.append(SweepRow(float(f"{tau / geo.nominal:.12g}"), n_w, o_w, n_s, o_s, bool(stable),
                             n_p, o_p, rng.a_min, rng.a_max, ss))
    return rows


def recommend(rows: Sequence[SweepRow]) -> Optional[SweepRow]:
    """Row with the smallest worst-case settling, ties broken by overshoot."""
    ok = [r for r in rows if r.small_signal_stable and math.isfinite(r.n_w_theory)]
    if not ok:
        return None
    return min(ok, key=lambda r: (r.n_w_theory, r.o_w_theory, r.tau_hat))
