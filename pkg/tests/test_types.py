import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmcond.types import (
    ConverterConfig,
    InterferenceSpec,
    LowPassFilter,
    OverdriveDelay,
    SlopeComp,
    ValidationError,
    constant_off_time,
    constant_on_time,
    denormalize,
    fixed_frequency,
    geometry,
    make_buck_config,
    method_name,
    normalize,
)


def test_table1_slopes(table1):
    # (12 - 2)/240n and 2/240n, worked by hand
    assert table1.m1 == pytest.approx(41.6667e6, rel=1e-3)
    assert table1.m2 == pytest.approx(8.3333e6, rel=1e-3)
    assert table1.m1 == pytest.approx(10 / 240e-9, rel=1e-15)


def test_equal_voltages_rejected():
    with pytest.raises(ValidationError) as e:
        make_buck_config(2, 2, 240e-9, 100e-6, 0.2, 0.01)
    assert e.value.field == "v_in"


def test_half_duty_symmetric():
    c = make_buck_config(12, 6, 1e-6, 100e-6, 1, 0.01)
    assert c.m1 == pytest.approx(6e6) and c.m2 == pytest.approx(6e6)


@pytest.mark.parametrize("field, args", [
    ("inductance", (12, 2, 0, 1e-4, 0.2, 0.01)),
    ("capacitance", (12, 2, 1e-6, -1, 0.2, 0.01)),
    ("r_load", (12, 2, 1e-6, 1e-4, 0, 0.01)),
    ("r_sense", (12, 2, 1e-6, 1e-4, 0.2, 0)),
    ("v_out", (12, -2, 1e-6, 1e-4, 0.2, 0.01)),
])
def test_bad_fields_named(field, args):
    with pytest.raises(ValidationError) as e:
        make_buck_config(*args)
    assert e.value.field == field


def test_scheme_validation(table1):
    with pytest.raises(ValidationError):
        constant_on_time(-1e-9)
    # the floor applies to the controlled interval, 500 ns here
    geometry(table1, constant_on_time(100e-9, 400e-9))
    with pytest.raises(ValidationError):
        geometry(table1, constant_on_time(100e-9, 600e-9))
    fixed_frequency(1e-6, "valley")
    with pytest.raises(ValidationError):
        fixed_frequency(1e-6, "middle")


def test_method_validation():
    with pytest.raises(ValidationError):
        SlopeComp(-1.0)
    with pytest.raises(ValidationError):
        LowPassFilter(0.0)
    with pytest.raises(ValidationError):
        OverdriveDelay(1e-9, 0.0)
    assert method_name(OverdriveDelay(1e-9, 0.01)) == "overdrive"


def test_spec_validation():
    with pytest.raises(ValidationError):
        InterferenceSpec(-1, 1, 0, 0)
    with pytest.raises(ValidationError):
        InterferenceSpec(0, 0, 0, 0)


def test_geometry_cot_swaps_roles(table1, cot):
    geo = geometry(table1, cot)
    assert geo.sign == -1
    assert geo.ramp == table1.m2
    assert geo.nominal == pytest.approx(500e-9)
    assert geo.uncontrolled(geo.nominal) == pytest.approx(100e-9)


def test_normalize_examples(table1):
    sch = constant_off_time(500e-9)  # T_on = 100 ns
    spec = InterferenceSpec(0.41667, 2 * math.pi * 10e6, 0.0, 0.0)
    nq = normalize(table1, sch, spec, SlopeComp(20.8335e6))
    assert nq.m_s_hat == pytest.approx(0.5, rel=1e-4)
    assert nq.a_hat == pytest.approx(0.1, rel=1e-4)
    assert nq.omega_hat == pytest.approx(1.0, rel=1e-12)
    assert nq.tau_hat is None  # absent, not zero


def test_overdrive_tau_base(table1):
    sch = constant_off_time(500e-9)
    spec = InterferenceSpec(0.1, 1e8, 0, 0)
    m = OverdriveDelay(1e-7, 0.01)
    nq = normalize(table1, sch, spec, m)
    tau_b = table1.m1 * (100e-9) ** 2 * table1.r_sense / (2 * 0.01)
    assert nq.tau_hat == pytest.approx(1e-7 / tau_b, rel=1e-12)
    assert nq.m_s_hat is None


pos = st.floats(1e-3, 1e3)


@given(m1=pos, m2=pos, a=pos, lam=pos, ms=pos, k=st.floats(1e-3, 1e3))
def test_normalization_scale_invariant(m1, m2, a, lam, ms, k):
    """Scaling slopes, amplitude and slew together leaves every hat unchanged."""
    sch = constant_off_time(1.0)
    base = normalize(ConverterConfig.from_slopes(m1, m2), sch,
                     InterferenceSpec(a, 2.0, lam, 0.0), SlopeComp(ms))
    scaled = normalize(ConverterConfig.from_slopes(k * m1, k * m2), sch,
                       InterferenceSpec(k * a, 2.0, k * lam, 0.0), SlopeComp(k * ms))
    for f in ("m_s_hat", "lambda_hat", "a_hat", "omega_hat", "t_on_min_hat"):
        assert getattr(scaled, f) == pytest.approx(getattr(base, f), rel=1e-9, abs=1e-300)


@given(a=pos, om=pos, lam=pos, tau=pos, tmin=st.floats(0, 0.9))
def test_normalize_round_trip(a, om, lam, tau, tmin):
    conf = ConverterConfig.from_slopes(3.0, 2.0)
    sch = constant_off_time(1.5, tmin)
    spec = InterferenceSpec(a, om, lam, 0.0)
    nq = normalize(conf, sch, spec, LowPassFilter(tau))
    back = denormalize(nq)
    assert back["a_ub"] == pytest.approx(a, rel=1e-12)
    assert back["omega_l"] == pytest.approx(om, rel=1e-12)
    assert back["lambda_ub"] == pytest.approx(lam, rel=1e-12)
    assert back["tau"] == pytest.approx(tau, rel=1e-12)
    assert back["t_on_min"] == pytest.approx(tmin, rel=1e-12, abs=1e-15)
    assert back["m_s"] is None
