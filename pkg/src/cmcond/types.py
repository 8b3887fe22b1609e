"""Shared domain types for the current-loop toolkit.

Every quantity is stored in SI units with currents in amperes. The sense
resistor only matters where a comparator threshold in volts has to be
turned into a current-referred budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union


class ValidationError(ValueError):
    """Raised when a parameter violates a type invariant.

    ``field`` names the offending parameter (or a JSON pointer when the
    error comes from the config loader).
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(name, f"must be positive, got {value!r}")
    return value


def _non_negative(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(name, f"must be non-negative, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# converter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConverterConfig:
    """Buck power stage. ``m1``/``m2`` are the on/off inductor current slopes in A/s."""

    v_in: float
    v_out: float
    inductance: float
    capacitance: float
    r_load: float
    r_sense: float
    m1: float
    m2: float

    def __post_init__(self):
        for name in ("v_in", "v_out", "inductance", "capacitance", "r_load", "r_sense", "m1", "m2"):
            _positive(name, getattr(self, name))
        if self.v_in <= self.v_out:
            raise ValidationError("v_in", "v_in must exceed v_out")

    @property
    def duty(self) -> float:
        return self.v_out / self.v_in

    @property
    def i_load(self) -> float:
        return self.v_out / self.r_load

    @classmethod
    def from_slopes(cls, m1: float, m2: float, inductance: float = 1.0,
                    capacitance: float = 1.0, r_load: float = 1.0,
                    r_sense: float = 1.0) -> "ConverterConfig":
        """Build a config whose voltages reproduce the given ramp slopes."""
        m1 = _positive("m1", m1)
        m2 = _positive("m2", m2)
        return make_buck_config(
            (m1 + m2) * inductance, m2 * inductance, inductance, capacitance, r_load, r_sense
        )


def make_buck_config(v_in, v_out, L, C, r_load, r_sense) -> ConverterConfig:
    """Derive the ramp slopes of a buck converter from its physical parameters."""
    v_in = _positive("v_in", v_in)
    v_out = _positive("v_out", v_out)
    L = _positive("inductance", L)
    _positive("capacitance", C)
    _positive("r_load", r_load)
    _positive("r_sense", r_sense)
    if v_in <= v_out:
        raise ValidationError("v_in", "v_in must exceed v_out")
    return ConverterConfig(
        v_in=v_in, v_out=v_out, inductance=L, capacitance=float(C),
        r_load=float(r_load), r_sense=float(r_sense),
        m1=(v_in - v_out) / L, m2=v_out / L,
    )


# ---------------------------------------------------------------------------
# modulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantOnTime:
    t_on: float

    def __post_init__(self):
        _positive("t_on", self.t_on)


@dataclass(frozen=True)
class ConstantOffTime:
    t_off: float

    def __post_init__(self):
        _positive("t_off", self.t_off)


@dataclass(frozen=True)
class FixedFrequency:
    t_s: float
    extremum: str = "peak"
    d_max: float = 0.95

    def __post_init__(self):
        _positive("t_s", self.t_s)
        if self.extremum not in ("peak", "valley"):
            raise ValidationError("extremum", "must be 'peak' or 'valley'")
        if not 0 < self.d_max <= 1:
            raise ValidationError("d_max", "must lie in (0, 1]")


SchemeVariant = Union[ConstantOnTime, ConstantOffTime, FixedFrequency]


@dataclass(frozen=True)
class ModulationScheme:
    """Modulation variant plus the floor on the controlled interval.

    ``t_on_min`` applies to whichever interval the comparator terminates:
    the on-time for peak control and the off-time for valley control.
    """

    variant: SchemeVariant
    t_on_min: float = 0.0

    def __post_init__(self):
        _non_negative("t_on_min", self.t_on_min)
        if isinstance(self.variant, FixedFrequency):
            if self.t_on_min >= self.variant.t_s * self.variant.d_max:
                raise ValidationError("t_on_min", "must be below t_s * d_max")
        elif isinstance(self.variant, ConstantOnTime):
            pass  # the controlled off-time is checked against the config in geometry()
        elif not isinstance(self.variant, ConstantOffTime):
            raise ValidationError("variant", f"unknown scheme {self.variant!r}")

    @property
    def kind(self) -> str:
        if isinstance(self.variant, ConstantOnTime):
            return "constant_on_time"
        if isinstance(self.variant, ConstantOffTime):
            return "constant_off_time"
        return "fixed_frequency"

    @property
    def extremum(self) -> str:
        if isinstance(self.variant, ConstantOnTime):
            return "valley"
        if isinstance(self.variant, ConstantOffTime):
            return "peak"
        return self.variant.extremum


def constant_on_time(t_on: float, t_on_min: float = 0.0) -> ModulationScheme:
    return ModulationScheme(ConstantOnTime(t_on), t_on_min)


def constant_off_time(t_off: float, t_on_min: float = 0.0) -> ModulationScheme:
    return ModulationScheme(ConstantOffTime(t_off), t_on_min)


def fixed_frequency(t_s: float, extremum: str = "peak", t_on_min: float = 0.0,
                    d_max: float = 0.95) -> ModulationScheme:
    return ModulationScheme(FixedFrequency(t_s, extremum, d_max), t_on_min)


@dataclass(frozen=True)
class LoopGeometry:
    """The loop seen from the comparator, with the ramp always rising.

    Valley control is folded onto peak control by flipping the sign of every
    current (``sign = -1``). ``ramp`` is the slope of the interval the
    comparator terminates and ``fall`` the slope of the other one.
    ``fixed_interval`` is the duration of the uncontrolled interval, or None
    for fixed frequency where it is ``period - t_controlled``.
    """

    sign: int
    ramp: float
    fall: float
    fixed_interval: Optional[float]
    period: Optional[float]
    nominal: float
    t_min: float
    t_max: float
    saturates: bool

    def uncontrolled(self, t_controlled: float) -> float:
        if self.fixed_interval is not None:
            return self.fixed_interval
        return self.period - t_controlled


def geometry(config: ConverterConfig, scheme: ModulationScheme,
             span_factor: float = 20.0) -> LoopGeometry:
    """Map a (config, scheme) pair onto the rising-ramp canonical loop."""
    v = scheme.variant
    if isinstance(v, ConstantOffTime):
        sign, ramp, fall = 1, config.m1, config.m2
        nominal = config.m2 * v.t_off / config.m1
        geo = LoopGeometry(sign, ramp, fall, v.t_off, None, nominal,
                           scheme.t_on_min, span_factor * nominal, False)
    elif isinstance(v, ConstantOnTime):
        sign, ramp, fall = -1, config.m2, config.m1
        nominal = config.m1 * v.t_on / config.m2
        geo = LoopGeometry(sign, ramp, fall, v.t_on, None, nominal,
                           scheme.t_on_min, span_factor * nominal, False)
    else:
        if v.extremum == "peak":
            sign, ramp, fall = 1, config.m1, config.m2
        else:
            sign, ramp, fall = -1, config.m2, config.m1
        nominal = v.t_s * fall / (ramp + fall)
        geo = LoopGeometry(sign, ramp, fall, None, v.t_s, nominal,
                           scheme.t_on_min, v.d_max * v.t_s, True)
    if geo.t_min >= geo.nominal:
        raise ValidationError("t_on_min", "must be below the nominal controlled interval")
    return geo


# ---------------------------------------------------------------------------
# interference bounds
# ---------------------------------------------------------------------------


PHASE_MODES = ("fixed", "random", "continuous")


@dataclass(frozen=True)
class InterferenceSpec:
    """Bounded interference class plus an optional concrete waveform.

    ``phase_mode`` says how the waveform is aligned to each cycle:
    ``fixed`` restarts it at every switching edge (switching-synchronous
    ringing), ``random`` adds a seeded per-cycle time shift, and
    ``continuous`` lets it run in absolute time.
    """

    a_ub: float
    omega_l: float
    lambda_ub: float
    b_functional: float
    waveform: Any = None
    phase_mode: str = "fixed"
    seed: int = 0

    def __post_init__(self):
        _non_negative("a_ub", self.a_ub)
        _positive("omega_l", self.omega_l)
        _non_negative("lambda_ub", self.lambda_ub)
        if not (self.b_functional >= 0):
            raise ValidationError("b_functional", "must be non-negative")
        if self.phase_mode not in PHASE_MODES:
            raise ValidationError("phase_mode", f"must be one of {PHASE_MODES}")


# ---------------------------------------------------------------------------
# conditioning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeComp:
    m_s: float = 0.0

    def __post_init__(self):
        _non_negative("m_s", self.m_s)


@dataclass(frozen=True)
class LowPassFilter:
    tau: float

    def __post_init__(self):
        _positive("tau", self.tau)


@dataclass(frozen=True)
class OverdriveDelay:
    """Saturating-integrator comparator: ``tau_c = C_eff/G``, threshold ``v_trig``."""

    tau_c: float
    v_trig: float
    t_d: float = 0.0
    blanking: float = 0.0

    def __post_init__(self):
        _positive("tau_c", self.tau_c)
        _positive("v_trig", self.v_trig)
        _non_negative("t_d", self.t_d)
        _non_negative("blanking", self.blanking)

    def charge(self, r_sense: float) -> float:
        """Current-referred integral budget ``V_trig*tau_c/R_s`` in A*s."""
        return self.v_trig * self.tau_c / r_sense


ConditioningMethod = Union[SlopeComp, LowPassFilter, OverdriveDelay]


def method_name(method: ConditioningMethod) -> str:
    if isinstance(method, SlopeComp):
        return "slope"
    if isinstance(method, LowPassFilter):
        return "filter"
    if isinstance(method, OverdriveDelay):
        return "overdrive"
    raise ValidationError("method", f"unknown conditioning method {method!r}")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizedQuantities:
    """Dimensionless design quantities.

    Entries that do not apply to the chosen method are None, never zero.
    The bases used for scaling are kept so the values can be mapped back.
    """

    m_s_hat: Optional[float]
    lambda_hat: float
    tau_hat: Optional[float]
    a_hat: float
    omega_hat: float
    t_on_min_hat: float
    ramp: float = field(repr=False, default=1.0)
    base_period: float = field(repr=False, default=1.0)
    tau_base: Optional[float] = field(repr=False, default=None)


def normalize(config: ConverterConfig, scheme: ModulationScheme,
              interference: InterferenceSpec, method: Optional[ConditioningMethod] = None
              ) -> NormalizedQuantities:
    """Scale a design by the controlled ramp and the nominal controlled interval.

    For constant on-time (valley) designs the roles of the two slopes and
    intervals swap, which ``geometry`` already takes care of.
    """
    geo = geometry(config, scheme)
    m, T = geo.ramp, geo.nominal
    m_s_hat = tau_hat = tau_base = None
    if isinstance(method, SlopeComp):
        m_s_hat = method.m_s / m
    elif isinstance(method, LowPassFilter):
        tau_base = T
        tau_hat = method.tau / T
    elif isinstance(method, OverdriveDelay):
        tau_base = m * T * T * config.r_sense / (2.0 * method.v_trig)
        tau_hat = method.tau_c / tau_base
    return NormalizedQuantities(
        m_s_hat=m_s_hat,
        lambda_hat=interference.lambda_ub / m,
        tau_hat=tau_hat,
        a_hat=interference.a_ub / (m * T),
        omega_hat=interference.omega_l * T / (2.0 * math.pi),
        t_on_min_hat=scheme.t_on_min / T,
        ramp=m,
        base_period=T,
        tau_base=tau_base,
    )


def denormalize(nq: NormalizedQuantities) -> dict:
    """Invert ``normalize``; absent entries stay None."""
    m, T = nq.ramp, nq.base_period
    return {
        "m_s": None if nq.m_s_hat is None else nq.m_s_hat * m,
        "lambda_ub": nq.lambda_hat * m,
        "tau": None if nq.tau_hat is None else nq.tau_hat * nq.tau_base,
        "a_ub": nq.a_hat * m * T,
        "omega_l": nq.omega_hat * 2.0 * math.pi / T,
        "t_on_min": nq.t_on_min_hat * T,
    }
