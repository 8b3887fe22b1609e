"""JSON configuration loading and SI quantity parsing.

Quantities are numbers or strings such as ``"240nH"``, ``"10 mOhm"`` or
``"41.667A/us"``. Every error names the offending field with a JSON pointer.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from . import interference as itf
from .types import (
    ConverterConfig,
    InterferenceSpec,
    LowPassFilter,
    ModulationScheme,
    OverdriveDelay,
    SlopeComp,
    ValidationError,
    constant_off_time,
    constant_on_time,
    fixed_frequency,
    make_buck_config,
)

# decimal exponents, so "50ns" parses to exactly the float 5e-08
PREFIXES = {
    "f": -15, "p": -12, "n": -9, "u": -6, "µ": -6, "μ": -6,
    "m": -3, "k": 3, "M": 6, "G": 9,
}
UNITS = {"V": "V", "A": "A", "H": "H", "F": "F", "s": "s", "Hz": "Hz", "Ohm": "Ohm",
         "ohm": "Ohm", "Ω": "Ohm", "rad": "rad", "W": "W"}

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def _unit_factor(token: str, pointer: str):
    if token in UNITS:
        return 0, UNITS[token]
    if len(token) > 1 and token[0] in PREFIXES and token[1:] in UNITS:
        return PREFIXES[token[0]], UNITS[token[1:]]
    raise ValidationError(pointer, f"unknown unit {token!r}")


def parse_quantity(value: Any, unit: Optional[str] = None, pointer: str = "") -> float:
    """Parse a number or an SI string. ``unit`` (e.g. ``"A/s"``) checks the dimension."""
    if isinstance(value, bool):
        raise ValidationError(pointer, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _NUMBER.match(value)
        if not m:
            raise ValidationError(pointer, f"cannot parse quantity {value!r}")
        number, text = m.group(1), m.group(2)
        exponent = 0
        if text:
            parts = text.split("/")
            if len(parts) > 2 or not all(parts):
                raise ValidationError(pointer, f"cannot parse unit {text!r}")
            exponent, got = _unit_factor(parts[0], pointer)
            if len(parts) == 2:
                den_e, den_u = _unit_factor(parts[1], pointer)
                exponent -= den_e
                got = f"{got}/{den_u}"
            if unit is not None and got != unit:
                raise ValidationError(pointer, f"expected unit {unit}, got {got}")
        # fold the prefix into the decimal exponent before converting to binary
        mant, _, exp = number.lower().partition("e")
        out = float(f"{mant}e{int(exp or 0) + exponent}")
    else:
        raise ValidationError(pointer, f"expected a quantity, got {type(value).__name__}")
    if not math.isfinite(out):
        raise ValidationError(pointer, "quantity must be finite")
    return out


class _Reader:
    """Walks a JSON object while tracking the pointer of each field."""

    def __init__(self, data, pointer: str = ""):
        if not isinstance(data, dict):
            raise ValidationError(pointer or "/", "expected an object")
        self.data = data
        self.pointer = pointer

    def at(self, key):
        return f"{self.pointer}/{key}"

    def has(self, key):
        return key in self.data

    def sub(self, key, required=True):
        if key not in self.data:
            if required:
                raise ValidationError(self.at(key), "required")
            return None
        return _Reader(self.data[key], self.at(key))

    def qty(self, key, unit=None, default=None, required=True):
        if key not in self.data:
            if default is not None or not required:
                return default
            raise ValidationError(self.at(key), "required")
        return parse_quantity(self.data[key], unit, self.at(key))

    def text(self, key, choices=None, default=None):
        v = self.data.get(key, default)
        if v is None:
            raise ValidationError(self.at(key), "required")
        if not isinstance(v, str) or (choices and v not in choices):
            raise ValidationError(self.at(key), f"expected one of {sorted(choices or [])}")
        return v

    def integer(self, key, default=None):
        v = self.data.get(key, default)
        if v is None:
            raise ValidationError(self.at(key), "required")
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError(self.at(key), "expected an integer")
        return v

    def omega(self, key_omega, key_freq):
        if self.has(key_omega):
            return self.qty(key_omega, None)
        if self.has(key_freq):
            return 2 * math.pi * self.qty(key_freq, "Hz")
        raise ValidationError(self.at(key_omega), f"required (or {key_freq} in Hz)")


def _wrap(pointer, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValidationError as e:
        if e.field.startswith("/"):
            raise
        raise ValidationError(pointer, str(e)) from None


def read_converter(r: _Reader) -> ConverterConfig:
    args = [r.qty("v_in", "V"), r.qty("v_out", "V"), r.qty("inductance", "H"),
            r.qty("capacitance", "F"), r.qty("r_load", "Ohm"), r.qty("r_sense", "Ohm")]
    return _wrap(r.pointer or "/", make_buck_config, *args)


def read_scheme(r: _Reader) -> ModulationScheme:
    kind = r.text("kind", {"constant_on_time", "constant_off_time", "fixed_frequency"})
    t_min = r.qty("t_on_min", "s", default=0.0)
    if kind == "constant_on_time":
        return _wrap(r.pointer, constant_on_time, r.qty("t_on", "s"), t_min)
    if kind == "constant_off_time":
        return _wrap(r.pointer, constant_off_time, r.qty("t_off", "s"), t_min)
    if r.has("f_s"):
        t_s = 1 / r.qty("f_s", "Hz")
    else:
        t_s = r.qty("t_s", "s")
    return _wrap(r.pointer, fixed_frequency, t_s, r.text("extremum", {"peak", "valley"}, "peak"),
                 t_min, r.qty("d_max", None, default=0.95))


def read_waveform(r: _Reader):
    kind = r.text("kind", {"sinusoid", "trapezoid", "ring", "composite"})
    if kind == "composite":
        parts = r.data.get("parts")
        if not isinstance(parts, list) or not parts:
            raise ValidationError(r.at("parts"), "expected a non-empty list")
        return itf.Composite([read_waveform(_Reader(p, f"{r.at('parts')}/{i}"))
                              for i, p in enumerate(parts)])
    amp = r.qty("amplitude", "A")
    om = r.omega("omega", "frequency")
    if kind == "sinusoid":
        return _wrap(r.pointer, itf.Sinusoid, amp, om, r.qty("phase", None, default=0.0))
    if kind == "trapezoid":
        return _wrap(r.pointer, itf.Trapezoid, amp, om, r.qty("slew", "A/s"),
                     r.qty("phase", None, default=0.0))
    return _wrap(r.pointer, itf.DampedRing, amp, om, r.qty("decay", None, default=0.0),
                 r.qty("start_time", "s", default=0.0))


def read_interference(r: Optional[_Reader]) -> Optional[InterferenceSpec]:
    if r is None:
        return None
    a_ub = r.qty("a_ub", "A")
    omega_l = r.omega("omega_l", "f_l")
    wf = read_waveform(r.sub("waveform")) if r.has("waveform") else None
    mode = r.text("phase_mode", {"fixed", "random", "continuous"}, "fixed")
    seed = r.integer("seed", 0)
    lam = r.qty("lambda_ub", "A/s", required=False)
    b = r.qty("b_functional", None, required=False)
    if wf is None:
        if lam is None:
            lam = a_ub * omega_l
        if b is None:
            b = a_ub / omega_l
        return _wrap(r.pointer, InterferenceSpec, a_ub, omega_l, lam, b, None, mode, seed)
    return _wrap(r.pointer, itf.make_spec, wf, a_ub=a_ub, omega_l=omega_l, lambda_ub=lam,
                 b_functional_value=b, phase_mode=mode, seed=seed)


def read_method(r: Optional[_Reader]):
    if r is None:
        return SlopeComp(0.0)
    kind = r.text("kind", {"none", "slope", "filter", "overdrive"})
    if kind == "none":
        return SlopeComp(0.0)
    if kind == "slope":
        return _wrap(r.pointer, SlopeComp, r.qty("m_s", "A/s"))
    if kind == "filter":
        return _wrap(r.pointer, LowPassFilter, r.qty("tau", "s"))
    return _wrap(r.pointer, OverdriveDelay, r.qty("tau_c", "s"), r.qty("v_trig", "V"),
                 r.qty("t_d", "s", default=0.0), r.qty("blanking", "s", default=0.0))


@dataclass(frozen=True)
class RunConfig:
    converter: ConverterConfig
    scheme: ModulationScheme
    interference: Optional[InterferenceSpec]
    method: object
    simulation: dict


def read_simulation(r: Optional[_Reader], converter: ConverterConfig) -> dict:
    out = {"n_cycles": 2000, "i_command": converter.i_load, "i_step": None,
           "step_at": None, "points_per_period": 200}
    if r is None:
        return out
    out["n_cycles"] = r.integer("n_cycles", 2000)
    if out["n_cycles"] < 1:
        raise ValidationError(r.at("n_cycles"), "must be >= 1")
    out["i_command"] = r.qty("i_command", "A", default=converter.i_load)
    out["i_step"] = r.qty("i_step", "A", required=False)
    out["step_at"] = r.integer("step_at", out["n_cycles"] // 2) if out["i_step"] is not None else None
    out["points_per_period"] = r.integer("points_per_period", 200)
    return out


def load_dict(data: dict) -> RunConfig:
    root = _Reader(data, "")
    conv = read_converter(root.sub("converter"))
    scheme = read_scheme(root.sub("scheme"))
    spec = read_interference(root.sub("interference", required=False))
    method = read_method(root.sub("method", required=False))
    simul = read_simulation(root.sub("simulation", required=False), conv)
    return RunConfig(conv, scheme, spec, method, simul)


def load(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError("/", f"invalid JSON: {e}") from None
    return load_dict(data)


# ---------------------------------------------------------------------------
# preset
# ---------------------------------------------------------------------------

#: Constant on-time valley-controlled buck with its interference bounds. The
#: bounds are 4 mV across the 10 mOhm sense resistor at 5 MHz, taken as the
#: amplitude and the lowest frequency of the interference.
TABLE1 = {
    "converter": {"v_in": "12V", "v_out": "2V", "inductance": "240nH",
                  "capacitance": "100uF", "r_load": "0.2Ohm", "r_sense": "10mOhm"},
    "scheme": {"kind": "constant_on_time", "t_on": "100ns"},
    "interference": {
        "a_ub": "0.4A", "f_l": "5MHz",
        "waveform": {"kind": "sinusoid", "amplitude": "0.4A", "frequency": "5MHz"},
    },
    "method": {"kind": "none"},
    "simulation": {"n_cycles": 2000, "i_command": "10A"},
}

#: The same converter with a decaying ring excited at the turn-on edge, 100 ns
#: before the controlled off-interval starts. Unconditioned it locks into a
#: period-5 orbit. The 100 ns floor on the off-interval keeps a filtered
#: valley comparator from firing at the switching instant.
TABLE1_RING = dict(TABLE1, scheme={"kind": "constant_on_time", "t_on": "100ns",
                                   "t_on_min": "100ns"}, interference={
    "a_ub": "2A", "f_l": "3MHz",
    "waveform": {"kind": "ring", "amplitude": "2A", "frequency": "3MHz",
                 "decay": 942477.796076938, "start_time": "-100ns"},
})

PRESETS = {"table1": TABLE1, "table1_ring": TABLE1_RING}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ValidationError("--preset", f"unknown preset {name!r}")
    return json.loads(json.dumps(PRESETS[name]))


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins."""
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out
