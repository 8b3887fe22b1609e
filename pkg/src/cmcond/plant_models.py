"""Small-signal plant models for designing an outer loop around the current loop.

All three return a DiscreteTF sampled once per switching cycle. The
load/duty parameter ``lambda_param`` has no default: it comes from the
companion large-signal model and must be supplied by the caller.
"""

from __future__ import annotations

from .metrics import DiscreteTF
from .types import ConverterConfig, ModulationScheme, ValidationError, geometry


def _times(config: ConverterConfig, scheme: ModulationScheme):
    geo = geometry(config, scheme)
    t_c = geo.nominal
    t_u = geo.uncontrolled(t_c)
    t_on = t_c if geo.sign > 0 else t_u
    return t_on, t_c + t_u


def _normalized(config, t_ref):
    r, c, L = config.r_load, config.capacitance, config.inductance
    return config.m1 / config.m2, r * c / t_ref, (L / r) / t_ref


def _check_lambda(lambda_param):
    if lambda_param is None:
        raise ValidationError("lambda_param", "required (no default)")
    return float(lambda_param)


def ripple_coupled_current_loop(config: ConverterConfig, scheme: ModulationScheme,
                                lambda_param: float) -> DiscreteTF:
    """Off-time response to the valley command when the output ripple couples into the ramp.

    ``g (1 - b1 z^-1 - b2 z^-2)/(1 - a1 z^-1)``. The correction terms of
    ``b1`` and ``b2`` use ``RC/T_on`` as their time constant.
    """
    lam = _check_lambda(lambda_param)
    t_on, period = _times(config, scheme)
    mr, t1, t2 = _normalized(config, t_on)
    k = 1 + mr
    i1, i12 = 1 / t1, 1 / (t1 * t2)
    a1 = 1 - k * i1 - k / 2 * i12
    b1 = 2 - k * i1 - (k * k / 2 + k * lam) * i12
    b2 = -1 + k * i1 - (k * k / 2 - k * lam) * i12
    g = config.inductance / config.v_out
    return DiscreteTF([g, -g * b1, -g * b2], [1.0, -a1], period)


def output_voltage_plant(config: ConverterConfig, scheme: ModulationScheme,
                         lambda_param: float) -> DiscreteTF:
    """Output voltage response to the valley command, ``g (1 - b1 z^-1) z^-1/(1 - a1 z^-1)``."""
    lam = _check_lambda(lambda_param)
    t_on, period = _times(config, scheme)
    mr, t1, t2 = _normalized(config, t_on)
    k = 1 + mr
    a1 = 1 - k / t1 - k / 2 / (t1 * t2)
    g = config.r_load * (lam + mr / 2) / t1
    b1 = -(1 - lam + mr / 2) / (lam + mr / 2)
    return DiscreteTF([0.0, g, -g * b1], [1.0, -a1], period)


def boost_fixed_frequency_plant(m_r: float, tau1_hat: float, tau2_hat: float,
                                r_load: float = 1.0, t_s: float = 1.0) -> DiscreteTF:
    """Boost converter under fixed-frequency peak control, voltage per peak command.

    ``tau1_hat = RC/T_s`` and ``tau2_hat = (L/R)/T_s``.
    """
    for name, v in (("m_r", m_r), ("tau1_hat", tau1_hat), ("tau2_hat", tau2_hat),
                    ("r_load", r_load), ("t_s", t_s)):
        if v <= 0:
            raise ValidationError(name, "must be positive")
    k = m_r + 1
    i1 = 1 / tau1_hat
    g = r_load * (-tau2_hat * i1 + (2 * m_r + 1) / (2 * k * k) * i1)
    a1 = 1 - (2 * m_r + 1) / k * i1 - (2 * m_r + 1) / k ** 3 * i1 / tau2_hat
    b1 = ((2 * k * k * tau2_hat + (2 * m_r * m_r + 4 * m_r + 1))
          / (2 * k * k * tau2_hat + (2 * m_r + 1)))
    return DiscreteTF([0.0, g, -g * b1], [1.0, -a1], t_s)


def coefficients(tf: DiscreteTF) -> dict:
    """Recover (g, a1, b1[, b2]) from one of the models above."""
    num = list(tf.num)
    a1 = -tf.den[1]
    if num[0] == 0:
        g = num[1]
        return {"g": g, "a1": a1, "b1": -num[2] / g}
    g = num[0]
    return {"g": g, "a1": a1, "b1": -num[1] / g, "b2": -num[2] / g}
