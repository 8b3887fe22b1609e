"""Transient metrics, discrete transfer functions and subharmonic detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

#: settling band matching the four-time-constant convention
SETTLING_BAND = math.exp(-4.0)


class UnstableRange(ValueError):
    pass


@dataclass(frozen=True)
class PoleRange:
    a_min: float
    a_max: float

    def __post_init__(self):
        if not (math.isfinite(self.a_min) and math.isfinite(self.a_max)):
            raise ValueError("pole range must be finite")
        if self.a_min > self.a_max:
            raise ValueError(f"a_min {self.a_min} exceeds a_max {self.a_max}")

    @property
    def stable(self) -> bool:
        return abs(self.a_min) < 1 and abs(self.a_max) < 1


def _settle_one(a: float) -> float:
    a = abs(a)
    if a == 0:
        return 0.0
    return abs(4.0 / math.log(a))


def settling_cycles(rng: PoleRange) -> float:
    """Worst-case settling ``max |4/ln|a||`` over the two ends of the range."""
    if not rng.stable:
        raise UnstableRange("unstable: settling undefined")
    return max(_settle_one(rng.a_min), _settle_one(rng.a_max))


def overshoot(rng: PoleRange) -> float:
    """Worst-case overshoot ``max(-a_min, 0)``."""
    return float(max(-rng.a_min, 0.0)) + 0.0  # no negative zero


# ---------------------------------------------------------------------------
# measured transients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransientMeasure:
    n_settle: int
    overshoot: float
    n_settle_fractional: float
    saturated: bool = False

    def __iter__(self):
        # unpacks as (n_settle, overshoot)
        return iter((self.n_settle, self.overshoot))


def measure_response(y: Sequence[float], y_before: float, final: Optional[float] = None,
                     band: float = SETTLING_BAND) -> TransientMeasure:
    """Settling and overshoot of a step response.

    ``y[0]`` is the first sample after the step, counted as cycle 1. Settling
    is the first cycle from which the error stays inside ``band*|step|``.
    The fractional value interpolates ``log|error|`` between the last cycle
    outside the band and the next one, which is exact for a geometric decay.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty response")
    if final is None:
        final = float(y[-1])
    step = final - y_before
    if step == 0:
        raise ValueError("response has no step")
    err = np.abs(y - final)
    tol = band * abs(step)
    outside = np.nonzero(err > tol)[0]
    saturated = False
    if outside.size == 0:
        n, frac = 1, _fractional(abs(step), float(err[0]), tol, 0)
    else:
        last = int(outside[-1])
        if last == y.size - 1:
            saturated = True
            n = y.size
            frac = float(y.size)
        else:
            n = last + 2
            frac = _fractional(float(err[last]), float(err[last + 1]), tol, last + 1)
    over = max(float(np.max(np.sign(step) * (y - final))) / abs(step), 0.0)
    return TransientMeasure(n, over, frac, saturated)


def _fractional(e_out: float, e_in: float, tol: float, k_out: int) -> float:
    """Cycle index (1-based) where log|e| crosses log(tol), k_out is 0-based."""
    if e_in <= 0 or e_out <= tol:
        return float(k_out + 1)
    lo, hi, lt = math.log(e_out), math.log(e_in), math.log(tol)
    if hi >= lo:
        return float(k_out + 1)
    return k_out + (lo - lt) / (lo - hi)


def measure_transient(trace, band: float = SETTLING_BAND, step_index: Optional[int] = None,
                      settle_window: int = 0) -> TransientMeasure:
    """Empirical settling and overshoot of a simulated command step.

    ``trace`` is a SimTrace or a plain sequence of extremum currents whose
    first entry is the pre-step value. With a SimTrace the step is located
    at the first change of the logged command.
    """
    if hasattr(trace, "samples"):
        y = np.array([s.i_extremum for s in trace.samples])
        cmd = np.array([s.i_command for s in trace.samples])
        if step_index is None:
            changes = np.nonzero(np.diff(cmd))[0]
            if changes.size == 0:
                raise ValueError("trace contains no command step")
            step_index = int(changes[0]) + 1
        if step_index < 1:
            raise ValueError("need at least one pre-step sample")
        before = y[step_index - 1]
        after = y[step_index:]
    else:
        y = np.asarray(trace, dtype=float)
        before, after = y[0], y[1:]
    final = float(np.mean(after[-settle_window:])) if settle_window > 0 else None
    return measure_response(after, before, final, band)


# ---------------------------------------------------------------------------
# discrete transfer functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteTF:
    """``num(z^-1)/den(z^-1)`` with coefficient lists in ascending powers of z^-1."""

    num: tuple
    den: tuple
    dt: float = 1.0

    def __init__(self, num, den, dt: float = 1.0):
        num = tuple(float(x) for x in num)
        den = tuple(float(x) for x in den)
        if not den or den[0] == 0:
            raise ValueError("denominator needs a nonzero leading coefficient")
        lead = den[0]
        object.__setattr__(self, "num", tuple(x / lead for x in num))
        object.__setattr__(self, "den", tuple(x / lead for x in den))
        object.__setattr__(self, "dt", float(dt))

    def poles(self) -> np.ndarray:
        # den(z^-1) * z^n is a polynomial in z with the same coefficients
        return np.roots(self.den) if len(self.den) > 1 else np.array([])

    def zeros(self) -> np.ndarray:
        num = list(self.num)
        while num and num[0] == 0:
            num.pop(0)  # leading pure delays
        return np.roots(num) if len(num) > 1 else np.array([])

    def dc_gain(self) -> float:
        return sum(self.num) / sum(self.den)

    def evaluate(self, z: complex) -> complex:
        zi = 1 / z
        n = sum(c * zi ** k for k, c in enumerate(self.num))
        d = sum(c * zi ** k for k, c in enumerate(self.den))
        return n / d

    def to_json(self) -> dict:
        return {"num": list(self.num), "den": list(self.den), "dt": self.dt}


def step_response(tf: DiscreteTF, n: int) -> np.ndarray:
    """Unit-step response by direct difference-equation recursion."""
    y = np.zeros(n)
    b, a = tf.num, tf.den
    for k in range(n):
        acc = 0.0
        for i, bi in enumerate(b):
            if k - i >= 0:
                acc += bi  # u[k-i] = 1
        for i in range(1, len(a)):
            if k - i >= 0:
                acc -= a[i] * y[k - i]
        y[k] = acc
    return y


def _polydiv(num, den):
    # np.polydiv trims remainder terms below an absolute 1e-8, which breaks
    # coefficients in physical units (seconds, henries)
    num = np.array(num, dtype=float)
    if len(num) < len(den):
        return np.array([0.0]), num
    quot = np.zeros(len(num) - len(den) + 1)
    rem = num.copy()
    for i in range(len(quot)):
        quot[i] = rem[i] / den[0]
        rem[i:i + len(den)] -= quot[i] * den
    return quot, rem[len(quot):]


def step_response_closed_form(tf: DiscreteTF, n: int) -> np.ndarray:
    """Unit-step response from partial fractions (distinct poles only).

    Writes the step response as ``K + sum_i r_i p_i^k`` plus a finite
    correction for numerators longer than the denominator.
    """
    # Y(q) = N(q)/(D(q)(1-q)) with q = z^-1; work with polynomials in q.
    num = np.trim_zeros(np.array(tf.num[::-1]), "f")  # descending powers of q
    if num.size == 0:
        return np.zeros(n)
    den_asc = np.array(tf.den)
    # a pole within rounding of z = 0 contributes nothing after the first samples
    den_asc[1:][np.abs(den_asc[1:]) < 1e-14 * np.max(np.abs(den_asc))] = 0.0
    den = np.polymul(np.trim_zeros(den_asc[::-1], "f"), np.array([-1.0, 1.0]))
    qpoles = np.roots(den)
    if np.sum(np.isclose(qpoles, 1.0)) > 1:
        raise ValueError("pole at z = 1")
    if len(set(np.round(qpoles, 12))) != len(qpoles):
        raise ValueError("repeated poles are not supported")
    quot, rem = _polydiv(num, den)
    dden = np.polyder(den)
    k = np.arange(n)
    y = np.zeros(n, dtype=complex)
    for qp in qpoles:
        # term c/(1 - q/qp) with c = -rem(qp)/(qp * den'(qp))
        c = -np.polyval(rem, qp) / (qp * np.polyval(dden, qp))
        y += c * (1.0 / qp) ** k
    quot = quot[::-1]  # ascending powers
    for i, c in enumerate(quot):
        if i < n:
            y[i] += c
    return np.real(y)


def step_metrics(tf: DiscreteTF, n: int = 400, band: float = SETTLING_BAND) -> TransientMeasure:
    """Settling/overshoot of the exact step response, zeros included."""
    y = step_response(tf, n)
    final = tf.dc_gain()
    return measure_response(y, 0.0, final, band)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    freq_hz: np.ndarray = field(repr=False)
    magnitude: np.ndarray = field(repr=False)
    orders: frozenset
    fundamental: float

    def order_strings(self):
        return sorted(f"{o.numerator}/{o.denominator}" for o in self.orders)


def candidate_orders(max_q: int = 8):
    out = set()
    for q in range(2, max_q + 1):
        for k in range(1, q):
            out.add(Fraction(k, q))
    return sorted(out)


def spectrum(t, i, fundamental_hz: float, max_q: int = 8, floor_factor: float = 10.0,
             rel_floor: float = 1e-3, min_periods: int = 64) -> SpectrumReport:
    """Magnitude spectrum of a waveform and the subharmonic orders it carries.

    The waveform is resampled on a uniform grid spanning a whole number of
    fundamental periods and Hann-windowed. An order k/q is flagged when the
    largest of the two bins nearest ``k/q * f0`` exceeds both
    ``floor_factor`` times the median magnitude and ``rel_floor`` times the
    magnitude at the fundamental.
    """
    t = np.asarray(t, dtype=float)
    i = np.asarray(i, dtype=float)
    if t.size < 2 or np.any(np.diff(t) < 0):
        raise ValueError("waveform must be time-monotone with at least two points")
    T0 = 1.0 / fundamental_hz
    n_periods = int(math.floor((t[-1] - t[0]) / T0 + 1e-9))
    if n_periods < min_periods:
        raise ValueError(f"trace spans {n_periods} periods, need at least {min_periods}")
    per_period = 64
    n = n_periods * per_period
    tu = t[-1] - n_periods * T0 + np.arange(n) * (T0 / per_period)
    x = np.interp(tu, t, i)
    x = x - x.mean()
    win = np.hanning(n)
    X = np.abs(np.fft.rfft(x * win)) * 2 / win.sum()
    f = np.fft.rfftfreq(n, T0 / per_period)
    df = f[1]
    floor = float(np.median(X[1:]))
    k0 = int(round(fundamental_hz / df))
    ref = float(X[max(k0 - 1, 1):k0 + 2].max())
    thresh = max(floor_factor * floor, rel_floor * ref)
    orders = set()
    for o in candidate_orders(max_q):
        pos = float(o) * fundamental_hz / df
        lo = int(math.floor(pos))
        peak = float(X[lo:lo + 2].max())
        if peak > thresh:
            orders.add(o)
    return SpectrumReport(f, X, frozenset(orders), fundamental_hz)


def orbit_period(values: Sequence[float], max_period: int = 8, rtol: float = 1e-6,
                 atol: float = 0.0) -> Optional[int]:
    """Smallest p <= max_period with values[k] == values[k-p] over the tail, else None."""
    v = np.asarray(values, dtype=float)
    if v.size < 2 * max_period + 1:
        raise ValueError("tail too short")
    scale = max(float(np.max(np.abs(v))), 1e-300)
    tol = rtol * scale + atol
    for p in range(1, max_period + 1):
        if np.all(np.abs(v[p:] - v[:-p]) <= tol):
            return p
    return None
