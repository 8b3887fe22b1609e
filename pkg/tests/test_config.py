import json
import math

import pytest

from cmcond import config as C
from cmcond.types import LowPassFilter, SlopeComp, ValidationError


@pytest.mark.parametrize("text, unit, value", [
    ("240nH", "H", 240e-9),
    ("100 uF", "F", 100e-6),
    ("10mOhm", "Ohm", 0.01),
    ("41.667A/us", "A/s", 41.667e6),
    ("5MHz", "Hz", 5e6),
    (3, None, 3.0),
    ("1e-3", None, 1e-3),
])
def test_parse_quantity(text, unit, value):
    assert C.parse_quantity(text, unit) == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("text, unit", [("10 furlongs", None), ("10ns", "H"), ("abc", None),
                                        (True, None), ("1/", None)])
def test_parse_quantity_errors(text, unit):
    with pytest.raises(ValidationError):
        C.parse_quantity(text, unit, "/x")


def test_preset_loads():
    run = C.load_dict(C.preset("table1"))
    assert run.converter.m1 == pytest.approx(10 / 240e-9)
    assert run.interference.a_ub == pytest.approx(0.4)
    assert run.interference.omega_l == pytest.approx(2 * math.pi * 5e6)
    assert run.method == SlopeComp(0.0)
    assert run.simulation["i_command"] == pytest.approx(10.0)


def test_error_pointer():
    data = C.preset("table1")
    data["converter"]["inductance"] = "-1nH"
    with pytest.raises(ValidationError) as e:
        C.load_dict(data)
    assert e.value.field == "/converter"
    data = C.preset("table1")
    data["scheme"]["t_on"] = "100 parsecs"
    with pytest.raises(ValidationError) as e:
        C.load_dict(data)
    assert e.value.field == "/scheme/t_on"


def test_interference_requires_bounds():
    data = C.preset("table1")
    del data["interference"]["f_l"]
    with pytest.raises(ValidationError) as e:
        C.load_dict(data)
    assert e.value.field.startswith("/interference/omega_l")


def test_class_only_interference():
    data = C.preset("table1")
    data["interference"] = {"a_ub": "0.1A", "omega_l": 1e8}
    spec = C.load_dict(data).interference
    assert spec.waveform is None
    assert spec.lambda_ub == pytest.approx(1e7)
    assert spec.b_functional == pytest.approx(1e-9)


def test_method_section(tmp_path):
    data = C.preset("table1")
    data["method"] = {"kind": "filter", "tau": "50ns"}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    assert C.load(p).method == LowPassFilter(50e-9)


def test_merge_is_recursive():
    out = C.merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
    assert out == {"a": {"b": 1, "c": 3}}
