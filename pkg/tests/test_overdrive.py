import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmcond import interference as itf
from cmcond import overdrive as od
from cmcond.metrics import overshoot, settling_cycles
from cmcond.types import OverdriveDelay, ValidationError

US = 1e-6


def test_trigger_without_interference_is_quadratic_area():
    for tc in (0.01, 0.05, 0.2):
        model = od.ComparatorModel(tc, 1.0, 0.03)
        t = od.overdrive_trigger_time(1.0, None, 0.0, 1.0, model)
        assert t == pytest.approx(1.0 + math.sqrt(2 * tc) + 0.03, rel=1e-12)


def test_small_charge_recovers_ideal_comparator():
    ts = [od.overdrive_trigger_time(2.0, None, 0.0, 1.0, od.ComparatorModel(q, 1.0))
          for q in (1e-4, 1e-8, 1e-12)]
    assert abs(ts[-1] - 0.5) < 1e-5
    assert abs(ts[0] - 0.5) > abs(ts[1] - 0.5) > abs(ts[2] - 0.5)


def _dense_oracle(m, wf, iv, ic, Q, t_d, t_max=10.0, n=400_001):
    # clamped running integral on a fine grid (trapezoid rule), first reach of Q
    t = np.linspace(0, t_max, n)
    u = iv + m * t + itf.value(wf, t) - ic
    v = np.zeros_like(t)
    for k in range(1, n):
        v[k] = max(v[k - 1] + 0.5 * (u[k] + u[k - 1]) * (t[k] - t[k - 1]), 0.0)
    k = int(np.nonzero(v >= Q)[0][0])
    return t[k] + t_d


def test_multiple_crossings_trigger_matches_dense_oracle_and_envelope():
    model = od.ComparatorModel(0.02, 1.0, 0.01)
    wf = itf.Sinusoid(0.3, 2 * math.pi * 1.7, 0.4)  # slope exceeds the ramp
    t = od.overdrive_trigger_time(1.0, wf, 0.0, 1.0, model)
    assert t == pytest.approx(_dense_oracle(1.0, wf, 0.0, 1.0, 0.02, 0.01), abs=5e-4)
    lo, hi = od.envelope_bounds(1.0, 0.3, 0.0, 1.0, model)
    assert lo <= t <= hi


@given(ph=st.floats(0, 2 * math.pi), frac=st.floats(0.1, 1.0), wmul=st.floats(1.0, 3.0))
def test_envelope_containment(ph, frac, wmul):
    A, om = 0.1, 2 * math.pi * 2.5
    model = od.ComparatorModel(0.05, 1.0, 0.02)
    lo, hi = od.envelope_bounds(1.0, A, 0.0, 1.0, model)
    w = om * wmul
    wf = itf.Trapezoid(A * frac, w, 3 * A * frac * w, ph)
    t = od.overdrive_trigger_time(1.0, wf, 0.0, 1.0, model)
    assert lo - 1e-12 <= t <= hi + 1e-12


def test_stability_bound_examples():
    assert od.stability_bound(1e6, itf.zero_spec()) == 0.0
    spec = itf.sinusoid_class(0.05, 62.832e6)
    assert od.stability_bound(1e6, spec) / US == pytest.approx(0.01 + 7.958e-4, rel=1e-4)
    spec2 = itf.sinusoid_class(0.10, 62.832e6)
    assert 4 * 0.1 ** 2 / 1e6 + 2 * spec.b_functional == pytest.approx(
        od.stability_bound(1e6, spec2), rel=1e-12)


def test_max_overdrive_delay_examples():
    assert od.max_overdrive_delay(1e6, None, 2e-8) == pytest.approx(math.sqrt(4e-14), rel=1e-12)
    spec = itf.sinusoid_class(0.05, 62.832e6)
    t = od.max_overdrive_delay(1e6, spec, 0.0116 * US - spec.b_functional)
    # 0.05 + sqrt(0.0025 + 0.0232) us
    assert t / US == pytest.approx(0.05 + math.sqrt(0.0257), rel=1e-12)
    assert t / US == pytest.approx(0.2102, abs=2e-4)


@given(q1=st.floats(0, 1e-7), q2=st.floats(0, 1e-7))
def test_max_overdrive_delay_monotone(q1, q2):
    spec = itf.sinusoid_class(0.05, 62.832e6)
    lo, hi = sorted((q1, q2))
    assert od.max_overdrive_delay(1e6, spec, lo) <= od.max_overdrive_delay(1e6, spec, hi)


def test_psi_and_pole_range_example():
    pmin, pmax, rng = od.psi_and_pole_range(1.0, 0.1, 2.0, 1.0)
    assert pmin == pytest.approx(-0.1852, abs=1e-4)
    assert pmax == pytest.approx(0.2273, abs=1e-4)
    assert rng.a_min == pytest.approx(-0.2273, abs=1e-4)
    assert rng.a_max == pytest.approx(0.1852, abs=1e-4)
    assert overshoot(rng) == pytest.approx(0.2273, abs=1e-4)


def test_psi_range_vanishes_for_large_tau():
    _, _, rng = od.psi_and_pole_range(1.0, 0.1, 2.0, 1e8)
    assert abs(rng.a_min) < 1e-4 and abs(rng.a_max) < 1e-4


def test_psi_range_boundary_rejected():
    with pytest.raises(od.InsufficientOverdrive):
        od.psi_and_pole_range(1.0, 0.1, 2.0, 0.05)


@given(a=st.floats(0.01, 0.3), w=st.floats(0.5, 5.0), t1=st.floats(0.0, 5.0), t2=st.floats(0.0, 5.0))
def test_metrics_improve_with_tau(a, w, t1, t2):
    base = a / w + 1e-6
    lo, hi = sorted((base + t1, base + t2))
    _, _, r_lo = od.psi_and_pole_range(1.0, a, w, lo)
    _, _, r_hi = od.psi_and_pole_range(1.0, a, w, hi)
    assert overshoot(r_hi) <= overshoot(r_lo) + 1e-12
    if r_lo.stable:
        assert settling_cycles(r_hi) <= settling_cycles(r_lo) + 1e-9
    # delay bound grows with the charge
    m, T = 1.0, 1.0
    spec = itf.sinusoid_class(a, 2 * math.pi * w)
    d_lo = od.max_overdrive_delay(m, spec, lo * m * T * T / 2)
    d_hi = od.max_overdrive_delay(m, spec, hi * m * T * T / 2)
    assert d_lo <= d_hi


@pytest.mark.parametrize("p1,p2", [(6.102e-9 * 1e-3, 4.198e-9), (113.3e-9 * 1e-3, 24.75e-9)])
def test_fit_recovers_synthetic_delays(p1, p2):
    v = np.array([2, 5, 10, 20, 50, 100]) * 1e-3
    q1, q2 = od.fit_datasheet_delay(list(zip(v, p1 / v + p2)))
    assert q1 == pytest.approx(p1, rel=1e-9)
    assert q2 == pytest.approx(p2, rel=1e-9)


def test_fit_two_points_interpolates():
    q1, q2 = od.fit_datasheet_delay([(1.0, 3.0), (2.0, 2.0)])
    assert (q1, q2) == pytest.approx((2.0, 1.0))


def test_fit_rejects_degenerate_data():
    with pytest.raises(od.RankDeficientFit):
        od.fit_datasheet_delay([(1.0, 3.0), (1.0, 2.0)])
    with pytest.raises(od.RankDeficientFit):
        od.fit_datasheet_delay([(1.0, 3.0)])
    with pytest.raises(ValidationError):
        od.fit_datasheet_delay([(0.0, 3.0), (1.0, 2.0)])


def test_size_for_speed_zero_interference(table1, coft):
    rep = od.size_for_speed(table1, coft, itf.zero_spec(2 * math.pi * 20e6), 0.01)
    assert rep.tau_c == 0.0 and rep.t_on_min == 0.0
    assert rep.t_on_min == math.sqrt(2 * rep.charge / table1.m1)
    assert rep.gas_stable and rep.feasible


def test_size_for_speed_golden(table1, coft):
    # A_hat 0.1, omega_hat 2.5 on the 100 ns on-time
    spec = itf.sinusoid_class(0.41667, 2 * math.pi * 25e6)
    rep = od.size_for_speed(table1, coft, spec, 0.01)
    m = table1.m1
    q_ref = 1.05 * (4 * 0.41667 ** 2 / m + 0.41667 / (2 * math.pi * 25e6))
    assert rep.charge == pytest.approx(q_ref, rel=1e-9)
    assert rep.charge == pytest.approx(2.0286e-8, rel=1e-4)
    assert rep.t_on_min == rep.t_od_max
    assert rep.t_od_max == pytest.approx(4.4656e-8, rel=1e-4)
    assert rep.pole_range == pytest.approx((-1.2535, 0.5562), abs=1e-4)
    assert rep.feasible and rep.gas_stable
    assert rep.continuous_certified == "not-evaluable"


def test_size_for_speed_infeasible(table1, coft):
    spec = itf.sinusoid_class(3.0, 2 * math.pi * 25e6)
    rep = od.size_for_speed(table1, coft, spec, 0.01)
    assert not rep.feasible
    assert rep.t_on_min > 100e-9
    assert "exceeds" in rep.reason


def test_numeric_psi_inside_analytic_bounds(table1, coft):
    cls = itf.sinusoid_class(0.125, 2 * math.pi * 20e6)
    rep = od.size_for_speed(table1, coft, cls, 0.01)
    lo, hi = rep.psi_range
    for ph in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        spec = itf.make_spec(itf.Sinusoid(0.125, 2 * math.pi * 20e6, ph))
        psi, _ = od.numeric_psi(table1, coft, spec, OverdriveDelay(rep.tau_c, 0.01), 10.0)
        assert lo <= psi <= hi


def test_region_boundaries_ordered():
    model = od.ComparatorModel(0.05, 1.0, 0.0, 0.1)
    ta, tb, te = model.region_boundaries(1.0, 0.2, 0.0, 1.0)
    assert ta <= tb <= te
    assert (tb, te) == pytest.approx((0.8, 1.2))
