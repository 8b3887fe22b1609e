import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmcond.metrics import (
    DiscreteTF,
    PoleRange,
    UnstableRange,
    measure_response,
    measure_transient,
    orbit_period,
    overshoot,
    settling_cycles,
    spectrum,
    step_metrics,
    step_response,
    step_response_closed_form,
)


def test_settling_examples():
    e = math.exp(-1)
    assert settling_cycles(PoleRange(e, e)) == pytest.approx(4.0)
    assert settling_cycles(PoleRange(0.0, 0.0)) == 0.0
    assert settling_cycles(PoleRange(-0.5352, 0.5352)) == pytest.approx(6.40, abs=0.01)


def test_settling_unstable():
    with pytest.raises(UnstableRange):
        settling_cycles(PoleRange(-1.0, 0.2))


def test_pole_range_validation():
    with pytest.raises(ValueError):
        PoleRange(0.5, 0.1)
    with pytest.raises(ValueError):
        PoleRange(-math.inf, 0.1)


def test_overshoot_examples():
    assert overshoot(PoleRange(-0.5, 0.1)) == 0.5
    assert overshoot(PoleRange(0.3, 0.4)) == 0.0
    assert overshoot(PoleRange(-0.2273, 0.1852)) == pytest.approx(0.2273)


def _geometric(a, n=200, before=0.0, after=1.0):
    k = np.arange(1, n + 1)
    return np.concatenate([[before], after - (after - before) * a ** k])


def test_measure_transient_examples():
    assert tuple(measure_transient([0.0] + [1.0] * 20)) == (1, 0.0)
    n, _ = measure_transient(_geometric(math.exp(-1)))
    assert abs(n - 4) <= 1
    _, o = measure_transient(_geometric(-0.5))
    assert o == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("a", [-0.9, -0.6, -0.3, -0.1, 0.1, 0.3, 0.6, 0.9])
def test_formula_matches_measurement(a):
    m = measure_transient(_geometric(a, 400))
    assert abs(m.n_settle - settling_cycles(PoleRange(a, a))) <= 1
    assert abs(m.n_settle_fractional - settling_cycles(PoleRange(a, a))) <= 1e-9
    assert abs(m.overshoot - overshoot(PoleRange(a, a))) <= 0.02


def test_measure_transient_reports_budget_exhaustion():
    y = _geometric(0.99, 30)
    m = measure_response(y[1:], y[0], final=1.0)
    assert m.saturated and m.n_settle == 30


def test_measure_transient_needs_step():
    with pytest.raises(ValueError):
        measure_transient([1.0, 1.0, 1.0])


@given(p=st.floats(-0.95, 0.95), z=st.floats(-0.95, 0.95), g=st.floats(0.1, 10))
def test_step_response_routes_agree(p, z, g):
    if abs(p - 1) < 1e-6:
        return
    tf = DiscreteTF([g, -g * z], [1.0, -p])
    rec = step_response(tf, 100)
    cf = step_response_closed_form(tf, 100)
    assert np.allclose(rec, cf, rtol=1e-9, atol=1e-12 * np.max(np.abs(rec)))


def test_step_metrics_uses_zero():
    # a slow zero near the pole produces overshoot a pole-only formula misses
    tf = DiscreteTF([1.0, -0.9], [1.0, -0.2])
    m = step_metrics(tf)
    assert m.overshoot > 0.5
    assert overshoot(PoleRange(0.2, 0.2)) == 0.0


def test_discrete_tf_normalizes_and_reports():
    tf = DiscreteTF([2.0, 1.0], [2.0, -1.0], 1e-6)
    assert tf.den == (1.0, -0.5)
    assert tf.dc_gain() == pytest.approx(3.0 / 1.0)
    assert tf.poles() == pytest.approx([0.5])
    assert tf.zeros() == pytest.approx([-0.5])
    with pytest.raises(ValueError):
        DiscreteTF([1.0], [0.0, 1.0])


# ---- spectra ---------------------------------------------------------------


def _orbit_waveform(peaks, valley=0.0, duty=0.3, n_cycles=400, fs=1.0):
    """Piecewise-linear inductor current with a repeating list of peak values."""
    T = 1 / fs
    t, i = [], []
    for n in range(n_cycles):
        t += [n * T, n * T + duty * T]
        i += [valley, peaks[n % len(peaks)]]
    return np.array(t), np.array(i)


def test_spectrum_clean_period_one():
    t, i = _orbit_waveform([1.0])
    assert spectrum(t, i, 1.0).orders == frozenset()


def test_spectrum_period_five():
    t, i = _orbit_waveform([1.0, 1.3, 0.8, 1.1, 0.9])
    assert {"1/5", "2/5", "3/5", "4/5"} <= set(spectrum(t, i, 1.0).order_strings())


def test_spectrum_period_two():
    t, i = _orbit_waveform([1.0, 1.4])
    assert spectrum(t, i, 1.0).order_strings() == ["1/2"]


def test_spectrum_too_short():
    t, i = _orbit_waveform([1.0], n_cycles=20)
    with pytest.raises(ValueError):
        spectrum(t, i, 1.0)


def test_planted_line_detected_without_false_positives():
    rng = np.random.default_rng(7)
    fp = 0
    for k in range(100):
        duty = rng.uniform(0.1, 0.9)
        peak = rng.uniform(0.5, 5.0)
        valley = rng.uniform(-1.0, 0.4)
        t, i = _orbit_waveform([peak], valley, duty, n_cycles=256)
        fp += len(spectrum(t, i, 1.0).orders)
    assert fp == 0
    t, i = _orbit_waveform([1.0], 0.0, 0.3, n_cycles=256)
    t = np.linspace(0, t[-1], 256 * 200)
    i = np.interp(t, *_orbit_waveform([1.0], 0.0, 0.3, n_cycles=256))
    rep0 = spectrum(t, i, 1.0)
    ref = rep0.magnitude[np.argmin(np.abs(rep0.freq_hz - 1.0))]
    i2 = i + 0.01 * ref * np.sin(2 * math.pi * (3 / 7) * t)  # -40 dB
    assert spectrum(t, i2, 1.0).order_strings() == ["3/7"]


def test_orbit_period():
    assert orbit_period([1.0, 2.0] * 20) == 2
    assert orbit_period([1.0] * 40) == 1
    assert orbit_period(list(np.arange(40.0))) is None
