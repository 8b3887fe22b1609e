"""Interference waveforms on the current sensor and the functionals built on them.

Fourier convention: ``w(t) = integral W(omega) exp(j omega t) d omega``. Under it
a line ``A cos(omega0 t)`` contributes ``A/omega0`` to
``B = integral |W(omega)/omega| d omega``.

All waveforms are evaluated in cycle-local time. Each kind knows three things
the simulator needs in closed form: its value, its running integral from
zero, and its response through a unit-gain first-order low-pass started
from rest at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .types import InterferenceSpec, ValidationError


class NonIntegrableSpectrum(ValueError):
    pass


# ---------------------------------------------------------------------------
# waveform kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.omega <= 0:
            raise ValidationError("sinusoid", "amplitude must be >= 0 and omega > 0")


@dataclass(frozen=True)
class Trapezoid:
    """Symmetric trapezoid swinging between -A and +A.

    One period ``2*pi/omega`` starts at -A, rises with ``slew`` to +A, holds,
    falls back, and holds again. ``phase`` (radians) advances the waveform.
    """

    amplitude: float
    omega: float
    slew: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.omega <= 0 or self.slew <= 0:
            raise ValidationError("trapezoid", "amplitude >= 0, omega > 0, slew > 0 required")
        if self.rise_time > self.period / 2 * (1 + 1e-12):
            raise ValidationError(
                "trapezoid.slew", "too small to swing the full amplitude in half a period")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def rise_time(self) -> float:
        return 2.0 * self.amplitude / self.slew

    def knots(self):
        """Corner times and values of one period starting at the bottom of the rise."""
        r = self.rise_time
        p = self.period / 2 - r
        ts = np.array([0.0, r, r + p, 2 * r + p, self.period])
        A = self.amplitude
        ys = np.array([-A, A, A, -A, -A])
        return ts, ys


@dataclass(frozen=True)
class DampedRing:
    """Ringing that starts at ``start_time`` into each cycle.

    ``A exp(-decay*u) sin(omega*u)`` with ``u = t - start_time``. The sine keeps
    the waveform continuous at the start so the slope bound below is honest.
    """

    amplitude: float
    omega: float
    decay: float
    start_time: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.omega <= 0 or self.decay < 0:
            raise ValidationError("damped_ring", "amplitude >= 0, omega > 0, decay >= 0 required")


@dataclass(frozen=True)
class Composite:
    parts: tuple = ()

    def __init__(self, parts: Sequence = ()):
        object.__setattr__(self, "parts", tuple(parts))


Waveform = Union[Sinusoid, Trapezoid, DampedRing, Composite]


def _leaves(wf):
    if wf is None:
        return []
    if isinstance(wf, Composite):
        out = []
        for p in wf.parts:
            out.extend(_leaves(p))
        return out
    return [wf]


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------
# Sinusoids and rings are real parts of c*exp(p*u) for u >= 0, with
# u = t + shift - start. Trapezoids are piecewise linear.


def _exp_term(wf, shift):
    """Return (c, p, start) so that w(t) = Re(c exp(p (t - start))) for t >= start."""
    if isinstance(wf, Sinusoid):
        p = 1j * wf.omega
        return wf.amplitude * np.exp(1j * (wf.phase + wf.omega * shift)), p, -math.inf
    # ring: A e^{-s u} sin(w u) = Re(-jA e^{(-s + jw) u})
    return -1j * wf.amplitude, complex(-wf.decay, wf.omega), wf.start_time - shift


def _exp_value(c, p, start, t):
    if start == -math.inf:
        return np.real(c * np.exp(p * t))
    u = t - start
    on = u >= 0
    return np.where(on, np.real(c * np.exp(p * np.where(on, u, 0.0))), 0.0)


def _exp_slope(c, p, start, t):
    if start == -math.inf:
        return np.real(c * p * np.exp(p * t))
    u = t - start
    on = u >= 0
    return np.where(on, np.real(c * p * np.exp(p * np.where(on, u, 0.0))), 0.0)


def _exp_integral(c, p, start, t):
    """Integral of the term from 0 to t."""
    if start == -math.inf:
        return np.real(c * (np.exp(p * t) - 1.0) / p)
    lo = max(start, 0.0)
    u_lo = lo - start
    u = np.maximum(t, lo) - start
    return np.real(c * (np.exp(p * u) - np.exp(p * u_lo)) / p)


def _exp_filtered(c, p, start, t, tau):
    """(w u * h)(t) with h(t) = exp(-t/tau)/tau, filter at rest at t = 0."""
    t = np.asarray(t, dtype=float)
    k = 1.0 + p * tau
    if start == -math.inf:
        return np.real(c * (np.exp(p * t) - np.exp(-t / tau)) / k)
    lo = max(start, 0.0)
    u_lo = lo - start
    tt = np.maximum(t, lo)
    u = tt - start
    val = np.real(c * (np.exp(p * u) - np.exp(p * u_lo) * np.exp(-(tt - lo) / tau)) / k)
    return np.where(t >= lo, val, 0.0)


def _trap_local(wf: Trapezoid, t):
    """Position within the period, measured from the bottom of the rise."""
    P = wf.period
    return np.mod(np.asarray(t, dtype=float) + wf.phase / wf.omega, P)


def _trap_value(wf: Trapezoid, t, shift):
    ts, ys = wf.knots()
    return np.interp(_trap_local(wf, np.asarray(t) + shift), ts, ys)


def _trap_slope(wf: Trapezoid, t, shift):
    u = _trap_local(wf, np.asarray(t) + shift)
    r, P = wf.rise_time, wf.period
    p = P / 2 - r
    s = np.zeros_like(u)
    s = np.where(u < r, wf.slew, s)
    s = np.where((u >= r + p) & (u < 2 * r + p), -wf.slew, s)
    return s


def _trap_cumulative(wf: Trapezoid, u):
    """Integral of one period's shape from 0 to u, u in [0, P]."""
    ts, ys = wf.knots()
    seg_area = 0.5 * (ys[1:] + ys[:-1]) * np.diff(ts)
    cum = np.concatenate([[0.0], np.cumsum(seg_area)])
    u = np.asarray(u, dtype=float)
    i = np.clip(np.searchsorted(ts, u, side="right") - 1, 0, len(ts) - 2)
    y0 = ys[i]
    y_u = np.interp(u, ts, ys)
    return cum[i] + 0.5 * (y0 + y_u) * (u - ts[i])


def _trap_integral(wf: Trapezoid, t, shift):
    """Integral from 0 to t. The shape has zero mean over a period."""
    off = wf.phase / wf.omega + shift
    P = wf.period
    a = np.mod(np.asarray(t, dtype=float) + off, P)
    a0 = math.fmod(off, P)
    if a0 < 0:
        a0 += P
    return _trap_cumulative(wf, a) - float(_trap_cumulative(wf, a0))


def _trap_filtered(wf: Trapezoid, t, shift, tau):
    """Exact first-order filter response to the piecewise-linear trapezoid."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    t_max = float(t.max()) if t.size else 0.0
    ts, _ = wf.knots()
    P = wf.period
    off = wf.phase / wf.omega + shift
    # absolute corner times inside [0, t_max]
    k0 = math.floor((0.0 + off) / P) - 1
    k1 = math.floor((t_max + off) / P) + 1
    corners = (np.arange(k0, k1 + 1)[:, None] * P + ts[None, :-1]).ravel() - off
    corners = corners[(corners > 0) & (corners < t_max)]
    bp = np.concatenate([[0.0], np.sort(corners), [t_max]]) if t_max > 0 else np.array([0.0])
    bp = np.unique(bp)
    vals = _trap_value(wf, bp, shift)
    # y at each breakpoint, exact for linear input on each segment
    y = np.zeros_like(bp)
    for i in range(1, len(bp)):
        y[i] = _lin_seg_filter(y[i - 1], bp[i] - bp[i - 1], vals[i - 1], vals[i], tau)
    idx = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, max(len(bp) - 1, 0))
    dt = t - bp[idx]
    v0 = vals[idx]
    v1 = _trap_value(wf, t, shift)
    out = _lin_seg_filter(y[idx], dt, v0, v1, tau)
    return out


def _lin_seg_filter(y0, dt, v0, v1, tau):
    """Filter output after ``dt`` of linearly interpolated input from v0 to v1."""
    dt = np.asarray(dt, dtype=float)
    e = np.exp(-dt / tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(dt > 0, (v1 - v0) / np.where(dt > 0, dt, 1.0), 0.0)
    # response to v0 + slope*s: v(t) - slope*tau*(1 - e) plus decay of the mismatch
    return y0 * e + v0 * (1 - e) + slope * (dt - tau * (1 - e))


# ---------------------------------------------------------------------------
# evaluation entry points (used by the simulator)
# ---------------------------------------------------------------------------


def value(wf, t, shift: float = 0.0):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for leaf in _leaves(wf):
        if isinstance(leaf, Trapezoid):
            out = out + _trap_value(leaf, t, shift)
        else:
            out = out + _exp_value(*_exp_term(leaf, shift), t)
    return out


def slope(wf, t, shift: float = 0.0):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for leaf in _leaves(wf):
        if isinstance(leaf, Trapezoid):
            out = out + _trap_slope(leaf, t, shift)
        else:
            out = out + _exp_slope(*_exp_term(leaf, shift), t)
    return out


def integral(wf, t, shift: float = 0.0):
    """``integral_0^t w(s + shift) ds``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for leaf in _leaves(wf):
        if isinstance(leaf, Trapezoid):
            out = out + _trap_integral(leaf, t, shift)
        else:
            out = out + _exp_integral(*_exp_term(leaf, shift), t)
    return out


def filtered(wf, t, tau: float, shift: float = 0.0):
    """Low-pass response to the interference alone, filter at rest at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for leaf in _leaves(wf):
        if isinstance(leaf, Trapezoid):
            out = out + np.reshape(_trap_filtered(leaf, t, shift, tau), t.shape)
        else:
            out = out + _exp_filtered(*_exp_term(leaf, shift), t, tau)
    return out


def time_step(wf, points_per_period: int = 200) -> float:
    """Scan step that resolves the fastest feature of the waveform."""
    step = math.inf
    for leaf in _leaves(wf):
        if leaf.amplitude == 0:
            continue
        period = 2 * math.pi / leaf.omega
        step = min(step, period / points_per_period)
        if isinstance(leaf, Trapezoid):
            step = min(step, leaf.rise_time / 8)
    return step


def amplitude_bound(wf) -> float:
    return float(sum(leaf.amplitude for leaf in _leaves(wf)))


def lowest_omega(wf) -> float:
    omegas = [leaf.omega for leaf in _leaves(wf) if leaf.amplitude > 0]
    return min(omegas) if omegas else math.inf


# ---------------------------------------------------------------------------
# spec-level operations
# ---------------------------------------------------------------------------


def _shift_for(spec: InterferenceSpec, cycle_index: int, t_start: float) -> float:
    if spec.phase_mode == "fixed":
        return 0.0
    if spec.phase_mode == "continuous":
        return float(t_start)
    rng = np.random.default_rng([int(spec.seed), int(cycle_index)])
    return float(rng.random()) * 2 * math.pi / spec.omega_l


def cycle_shift(spec: InterferenceSpec, cycle_index: int, t_start: float = 0.0) -> float:
    """Time shift applied to the waveform in a given cycle."""
    return _shift_for(spec, cycle_index, t_start)


def sample(spec: InterferenceSpec, t, cycle_index: int = 0, t_start: float = 0.0):
    """Interference current at cycle-local time ``t`` of cycle ``cycle_index``.

    ``t_start`` is only used in ``continuous`` mode, where it is the absolute
    start time of the cycle.
    """
    if spec.waveform is None:
        return np.zeros_like(np.asarray(t, dtype=float))
    return value(spec.waveform, t, _shift_for(spec, cycle_index, t_start))


def lipschitz_bound(x) -> float:
    """Slope bound in A/s. Takes a waveform kind or an InterferenceSpec."""
    if isinstance(x, InterferenceSpec):
        return x.lambda_ub
    if x is None:
        return 0.0
    total = 0.0
    for leaf in _leaves(x):
        if isinstance(leaf, Sinusoid):
            total += leaf.amplitude * leaf.omega
        elif isinstance(leaf, Trapezoid):
            total += leaf.slew if leaf.amplitude > 0 else 0.0
        else:
            total += leaf.amplitude * math.hypot(leaf.omega, leaf.decay)
    return total


def trapezoid_lines(wf: Trapezoid, n_lines: int = 200_000):
    """Odd-harmonic amplitudes of the trapezoid's cosine series.

    Harmonic k has amplitude ``(4A/(k pi)) |sinc(k omega r / 2)|`` with rise
    time r, which reduces to a square wave for r -> 0 and a triangle for
    r = P/2.
    """
    k = np.arange(1, 2 * n_lines, 2, dtype=float)
    x = k * wf.omega * wf.rise_time / 2
    amp = 4 * wf.amplitude / (k * math.pi) * np.abs(np.sinc(x / math.pi))
    return k * wf.omega, amp


def b_functional(x, n_lines: int = 200_000) -> float:
    """``B = integral |W(omega)/omega| d omega`` in A*s."""
    if isinstance(x, InterferenceSpec):
        return x.b_functional
    total = 0.0
    for leaf in _leaves(x):
        if leaf.amplitude == 0:
            continue
        if isinstance(leaf, Sinusoid):
            total += leaf.amplitude / leaf.omega
        elif isinstance(leaf, Trapezoid):
            om, amp = trapezoid_lines(leaf, n_lines)
            total += float(np.sum(amp / om))
            # tail: |amp| <= 4A/(k pi), so the remainder is below 2A/(pi omega K)
            total += 2 * leaf.amplitude / (math.pi * leaf.omega * (2 * n_lines))
        else:
            raise NonIntegrableSpectrum(
                "damped ring has a nonzero spectrum at omega = 0, so B diverges")
    return total


def line_spectrum(wf, shift: float = 0.0):
    """Two-sided spectral lines (omega, W) of a line-spectrum waveform.

    Returns arrays so that ``w(t + shift) = sum(W * exp(j omega t))``.
    """
    om, W = [], []
    for leaf in _leaves(wf):
        if isinstance(leaf, Sinusoid):
            c = 0.5 * leaf.amplitude * np.exp(1j * (leaf.phase + leaf.omega * shift))
            om += [leaf.omega, -leaf.omega]
            W += [c, np.conj(c)]
        elif isinstance(leaf, Trapezoid):
            raise NonIntegrableSpectrum("use trapezoid_lines for trapezoids")
        else:
            raise NonIntegrableSpectrum("damped ring has a continuous spectrum")
    return np.array(om, dtype=float), np.array(W, dtype=complex)


def ring_spectrum(wf: DampedRing, omega):
    """Continuous spectrum W(omega) of a single ring under the stated convention."""
    s, w0, A, t0 = wf.decay, wf.omega, wf.amplitude, wf.start_time
    omega = np.asarray(omega, dtype=float)
    # FT of A e^{-s u} sin(w0 u) u(u) is A w0 / ((s + j omega)^2 + w0^2)
    F = A * w0 / ((s + 1j * omega) ** 2 + w0 ** 2) * np.exp(-1j * omega * t0)
    return F / (2 * math.pi)


def make_spec(waveform=None, *, a_ub=None, omega_l=None, lambda_ub=None,
              b_functional_value=None, phase_mode: str = "fixed",
              seed: int = 0) -> InterferenceSpec:
    """Wrap a waveform in an InterferenceSpec, deriving any bound not given.

    Explicit bounds must dominate the waveform's own values.
    """
    amp = amplitude_bound(waveform)
    lip = lipschitz_bound(waveform)
    low = lowest_omega(waveform)
    if a_ub is None:
        a_ub = amp
    if lambda_ub is None:
        lambda_ub = lip
    if omega_l is None:
        if not math.isfinite(low):
            raise ValidationError("omega_l", "required when the waveform is empty")
        omega_l = low
    if amp > a_ub * (1 + 1e-12):
        raise ValidationError("a_ub", f"waveform amplitude {amp} exceeds a_ub {a_ub}")
    if lip > lambda_ub * (1 + 1e-12):
        raise ValidationError("lambda_ub", f"waveform slope bound {lip} exceeds lambda_ub {lambda_ub}")
    if low < omega_l * (1 - 1e-12):
        raise ValidationError("omega_l", f"waveform frequency {low} is below omega_l {omega_l}")
    if b_functional_value is None:
        try:
            b_functional_value = b_functional(waveform)
        except NonIntegrableSpectrum:
            b_functional_value = math.inf
    return InterferenceSpec(a_ub=float(a_ub), omega_l=float(omega_l),
                            lambda_ub=float(lambda_ub), b_functional=float(b_functional_value),
                            waveform=waveform, phase_mode=phase_mode, seed=int(seed))


def zero_spec(omega_l: float = 1.0) -> InterferenceSpec:
    return InterferenceSpec(0.0, omega_l, 0.0, 0.0, None)


def sinusoid_class(a_ub: float, omega_l: float) -> InterferenceSpec:
    """Bounds of the sinusoidal class: slope A*omega and B = A/omega at the band edge."""
    return InterferenceSpec(a_ub, omega_l, a_ub * omega_l, a_ub / omega_l, None)


def shifted(wf, dt: float):
    """The same waveform advanced by ``dt``: ``shifted(wf, dt)(t) == wf(t + dt)``."""
    if wf is None:
        return None
    if isinstance(wf, Composite):
        return Composite([shifted(p, dt) for p in wf.parts])
    if isinstance(wf, (Sinusoid, Trapezoid)):
        return replace(wf, phase=wf.phase + wf.omega * dt)
    return replace(wf, start_time=wf.start_time - dt)


def with_waveform(spec: InterferenceSpec, wf) -> InterferenceSpec:
    return replace(spec, waveform=wf)
