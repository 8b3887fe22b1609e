import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from cmcond import config as C
from cmcond import interference as itf
from cmcond import sim
from cmcond.metrics import orbit_period, spectrum
from cmcond.types import (
    LowPassFilter,
    OverdriveDelay,
    SlopeComp,
    constant_off_time,
    fixed_frequency,
    geometry,
)


def _ctx(start=0.0, threshold=1.0, ramp=1.0, method=SlopeComp(0.0), wf=None, t_max=10.0,
         step=1e-2, **kw):
    return sim.CycleContext(ramp=ramp, start=start, threshold=threshold, method=method,
                            waveform=wf, t_max=t_max, step=step, **kw)


def test_deadbeat_without_compensation(unit_loop):
    conf, sch = unit_loop
    cmds = [1.0] * 3 + [1.2] * 5
    tr = sim.run_cycles(conf, sch, None, SlopeComp(0.0), cmds, 8)
    assert tr.samples[3].i_extremum == pytest.approx(1.2, abs=1e-12)


@given(ms=st.floats(0.05, 5.0))
def test_error_ratio_with_slope(ms):
    conf = C.load_dict(C.preset("table1")).converter
    sch = constant_off_time(500e-9)
    m1, ms_abs = conf.m1, ms * conf.m1
    tr = sim.run_cycles(conf, sch, None, SlopeComp(ms_abs), [10.0], 6,
                        init_state=sim.InitState(9.0, None, 100e-9))
    # fixed point: the on-time balances the fixed off-time, T* = m2 T_off / m1
    t_ss = conf.m2 * 500e-9 / m1
    e = np.concatenate([[9.0], tr.extremum]) - (10.0 - ms_abs * t_ss)
    big = np.abs(e[:-1]) > 1e-3  # keep roundoff out of the ratio
    assert big.sum() >= 1
    assert np.allclose((e[1:] / e[:-1])[big], ms_abs / (m1 + ms_abs), rtol=1e-9, atol=0)


def test_monotone_ramp_trigger():
    t = sim.find_trigger(_ctx(start=0.2, threshold=1.0, ramp=0.5))
    assert t == pytest.approx(1.6, abs=1e-12)


def test_first_of_several_crossings():
    wf = itf.Sinusoid(0.6, 2 * math.pi * 1.5)
    ctx = _ctx(start=0.0, threshold=0.9, ramp=0.4, wf=wf, step=1e-3)
    t = sim.find_trigger(ctx)
    # dense-grid oracle followed by bisection
    grid = np.linspace(0, 10, 2_000_001)
    g = 0.4 * grid + itf.value(wf, grid) - 0.9
    k = np.nonzero(g >= 0)[0][0]
    lo, hi = grid[k - 1], grid[k]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if 0.4 * mid + itf.value(wf, mid) - 0.9 >= 0:
            hi = mid
        else:
            lo = mid
    assert t == pytest.approx(hi, abs=1e-12)
    assert np.count_nonzero(np.diff(np.sign(g))) >= 3


def test_threshold_out_of_reach_starves():
    with pytest.raises(sim.TriggerStarvation):
        sim.find_trigger(_ctx(start=0.0, threshold=100.0, ramp=1.0, t_max=5.0))


def test_run_cycles_input_checks(unit_loop):
    conf, sch = unit_loop
    with pytest.raises(ValueError):
        sim.run_cycles(conf, sch, None, SlopeComp(0.0), [1.0], 0)
    with pytest.raises(ValueError):
        sim.run_cycles(conf, sch, None, SlopeComp(0.0), [1.0, 2.0], 3)


def test_static_mapping_linear(unit_loop):
    conf = C.load_dict(C.preset("table1")).converter
    sch = constant_off_time(500e-9)
    grid = np.linspace(9.0, 11.0, 21)
    mp = sim.static_mapping(conf, sch, None, SlopeComp(0.0), grid)
    t = np.array([p[1] for p in mp])
    assert np.allclose(np.diff(t) / np.diff(grid), 1 / conf.m1, rtol=1e-9)


def _strong_sine(conf):
    # slope 1.5 m1, so the sensor is not monotone
    w = 2 * math.pi / 100e-9 * 2
    return itf.make_spec(itf.Sinusoid(1.5 * conf.m1 / w, w))


def test_static_mapping_jumps_without_conditioning():
    conf = C.load_dict(C.preset("table1")).converter
    sch = constant_off_time(500e-9)
    spec = _strong_sine(conf)
    grid = np.linspace(8.0, 12.0, 401)
    mp = sim.static_mapping(conf, sch, spec, SlopeComp(0.0), grid)
    res = (grid[1] - grid[0]) / conf.m1
    assert sim.max_gap(mp) > 5 * res


def test_static_mapping_continuous_with_slope():
    conf = C.load_dict(C.preset("table1")).converter
    sch = constant_off_time(500e-9)
    spec = _strong_sine(conf)
    ms = 0.6 * conf.m1  # m1 + m_s > Lambda
    gaps = []
    for n in (101, 401, 1601):
        grid = np.linspace(8.0, 12.0, n)
        gaps.append(sim.max_gap(sim.static_mapping(conf, sch, spec, SlopeComp(ms), grid)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.3 * gaps[0]


def test_step_refinement_does_not_move_triggers(table1):
    sch = constant_off_time(500e-9)
    spec = itf.make_spec(itf.Sinusoid(0.3, 2 * math.pi * 20e6, 0.4))
    a = sim.run_cycles(table1, sch, spec, SlopeComp(2e7), [10.0], 40, points_per_period=200)
    b = sim.run_cycles(table1, sch, spec, SlopeComp(2e7), [10.0], 40, points_per_period=400)
    assert np.max(np.abs(a.t_on - b.t_on)) < 1e-10 * 100e-9  # relative to the on-time


def test_slope_steady_offset(table1):
    sch = constant_off_time(500e-9)
    ms = 5e6
    tr = sim.run_cycles(table1, sch, None, SlopeComp(ms), [10.0], 60,
                        init_state=sim.InitState(9.5, None, 100e-9))
    t_ss = tr.t_on[-1]
    assert tr.extremum[-1] == pytest.approx(10.0 - ms * t_ss, abs=1e-9)


def test_overdrive_steady_offset(table1):
    sch = constant_off_time(500e-9)
    meth = OverdriveDelay(2e-8, 0.01)
    Q = meth.charge(table1.r_sense)
    tr = sim.run_cycles(table1, sch, None, meth, [10.0], 40,
                        init_state=sim.InitState(11.0, None, 100e-9))
    t_od = math.sqrt(2 * Q / table1.m1)
    assert tr.extremum[-1] - 10.0 == pytest.approx(table1.m1 * t_od, rel=1e-9)


def test_filter_steady_state_matches_simulation(table1):
    sch = constant_off_time(500e-9)
    meth = LowPassFilter(60e-9)
    ss = sim.steady_state(table1, sch, meth, 10.0)
    tr = sim.run_cycles(table1, sch, None, meth, [10.0], 200,
                        init_state=sim.InitState(11.0, 10.5, 100e-9))
    assert tr.extremum[-1] == pytest.approx(ss.i_extremum, rel=1e-10)
    assert tr.t_on[-1] == pytest.approx(100e-9, rel=1e-9)


@pytest.mark.parametrize("scheme_kind", ["coft", "ff"])
def test_filter_state_carry_matches_continuous_filter(table1, scheme_kind):
    sch = constant_off_time(500e-9) if scheme_kind == "coft" else fixed_frequency(600e-9)
    geo = geometry(table1, sch)
    wf = itf.Sinusoid(0.2, 2 * math.pi * 13e6, 0.7)
    spec = itf.make_spec(wf)
    tau = 70e-9
    init = sim.InitState(7.9, 9.7, 100e-9)
    tr = sim.run_cycles(table1, sch, spec, LowPassFilter(tau), [10.0], 5, init_state=init)
    # continuous-time filter over the same switching instants; the sensor reads
    # the inductor current plus interference while the controlled interval runs
    # and nothing during the other interval
    y = init.filter_state * math.exp(-geo.uncontrolled(init.t_prev) / tau)
    x0 = init.i_extremum - geo.fall * geo.uncontrolled(init.t_prev)
    for s in tr.samples:
        u = lambda t, x0=x0: x0 + geo.ramp * t + itf.value(wf, t)
        sol = solve_ivp(lambda t, yy: (u(t) - yy) / tau, (0, s.t_on), [y], rtol=1e-12,
                        atol=1e-12, method="DOP853")
        y_end = sol.y[0, -1]
        assert y_end == pytest.approx(10.0, rel=1e-9)  # filter meets the command at trigger
        tu = geo.uncontrolled(s.t_on)
        y = y_end * math.exp(-tu / tau)
        x0 = s.i_extremum - geo.fall * tu
    assert tr.final_state.filter_state == pytest.approx(y_end, rel=1e-9)


def test_divergence_reported(unit_loop):
    conf, sch = unit_loop
    tr = sim.run_cycles(conf, sch, None, SlopeComp(0.0), [1.0], 5,
                        init_state=sim.InitState(1e9, None, 1.0))
    assert tr.terminated_by == "diverged"


def test_ring_scenario_subharmonic():
    run = C.load_dict(C.preset("table1_ring"))
    geo = geometry(run.converter, run.scheme)
    tr = sim.run_cycles(run.converter, run.scheme, run.interference, run.method, [10.0], 1000,
                        dense=True, deviation=False)
    assert tr.terminated_by in ("diverged", "cycle_budget")
    assert orbit_period(tr.extremum[-64:]) != 1
    t, i = tr.dense_waveform
    m = t >= t[-1] / 2
    f0 = 1 / (geo.nominal + geo.uncontrolled(geo.nominal))
    assert {"1/5", "2/5", "3/5", "4/5"} <= set(spectrum(t[m], i[m], f0).order_strings())


def test_fixed_frequency_saturation_flagged(table1):
    sch = fixed_frequency(600e-9, "peak", d_max=0.5)
    tr = sim.run_cycles(table1, sch, None, SlopeComp(0.0), [30.0], 3,
                        init_state=sim.InitState(10.0, None, 100e-9))
    assert any(s.saturated for s in tr.samples)


def test_valley_filter_without_floor_rejected(table1, cot):
    from cmcond.types import ValidationError
    with pytest.raises(ValidationError, match="t_on_min"):
        sim.run_cycles(table1, cot, None, LowPassFilter(30e-9), [10.0], 5)
