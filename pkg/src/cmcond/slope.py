"""Slope compensation: continuity and stability certificates, pole ranges, optimal slope.

All formulas take the slope of the controlled ramp as ``m1``. For constant
on-time (valley) designs pass the off-time slope instead; the comparison
ramp then runs the other way, which the simulator handles.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .interference import lipschitz_bound
from .metrics import DiscreteTF, PoleRange, UnstableRange, overshoot, settling_cycles
from .types import ConverterConfig, InterferenceSpec, ModulationScheme, geometry


class ContinuityRequired(ValueError):
    """A stability verdict was requested for a discontinuous static mapping."""


def _lam(interference) -> float:
    if isinstance(interference, (int, float)):
        return float(interference)
    return lipschitz_bound(interference)


def continuity_check(m1: float, m_s: float, interference) -> bool:
    """Sufficient condition for a strictly increasing compensated sensor."""
    return m1 + m_s > _lam(interference)


def stability_check(m1: float, m_s: float, interference) -> bool:
    """Large-signal verdict ``Lambda_ub < m1/2 + m_s`` (strict)."""
    if not continuity_check(m1, m_s, interference):
        raise ContinuityRequired("static mapping is not certified continuous")
    return _lam(interference) < m1 / 2 + m_s


def pole_range(m1: float, m_s: float, lambda_ub: float,
               m2_fixed_frequency: Optional[float] = None) -> PoleRange:
    """Range of the closed-loop pole when the sensor slope varies by +-lambda_ub.

    With ``m2_fixed_frequency`` the fixed-frequency loop is used, whose pole
    is ``(psi - m2)/(m1 + psi)`` instead of ``psi/(m1 + psi)``.
    """
    lo, hi = m_s - lambda_ub, m_s + lambda_ub
    if m1 + lo <= 0:
        raise ValueError("degenerate pole range: m1 + m_s must exceed lambda_ub")
    m2 = m2_fixed_frequency or 0.0
    return PoleRange((lo - m2) / (m1 + lo), (hi - m2) / (m1 + hi))


def optimal_slope(lambda_hat: float) -> float:
    """Normalized slope that balances the two ends of the pole range."""
    if lambda_hat < 0:
        raise ValueError("lambda_hat must be non-negative")
    return math.sqrt(0.25 + lambda_hat ** 2) - 0.5


def optimal_slope_fixed_frequency(lambda_hat: float, m2_hat: float) -> float:
    """Balanced slope for the fixed-frequency pole formula, found numerically."""
    def gap(ms):
        r = pole_range(1.0, ms, lambda_hat, m2_hat)
        return r.a_min + r.a_max
    lo = max(lambda_hat - 1.0, 0.0) + 1e-12
    if gap(lo) >= 0:
        return lo
    hi = 1.0
    while gap(hi) < 0:
        hi *= 2
    return brentq(gap, lo, hi, xtol=1e-14)


def min_settling_composed(lambda_hat: float) -> float:
    """Worst-case settling at the optimal slope, from the pole range."""
    ms = optimal_slope(lambda_hat)
    return settling_cycles(pole_range(1.0, ms, lambda_hat))


def min_settling_closed_form(lambda_hat: float) -> float:
    """Closed form for the minimum settling.

    It disagrees with ``min_settling_composed`` (it is 3.64 at zero
    interference, where the composition gives 0); both are reported.
    """
    x = 1.0 / (1.0 + math.sqrt(0.25 + lambda_hat ** 2) + lambda_hat)
    return abs(4.0 / math.log(abs(1.0 - x)))


def plant_tf(config: ConverterConfig, scheme: ModulationScheme) -> DiscreteTF:
    """Linear plant from trigger-time perturbation to extremum current."""
    kind = scheme.kind
    if kind == "constant_off_time":
        return DiscreteTF([1 / config.m1, -1 / config.m1], [1.0])
    if kind == "constant_on_time":
        return DiscreteTF([-1 / config.m2, 1 / config.m2], [1.0])
    # (1 - z^-1)/(m1 + m2 z^-1)
    return DiscreteTF([1.0, -1.0], [config.m1, config.m2])


@dataclass(frozen=True)
class SlopeDesignReport:
    m_s: float
    continuous: bool
    gas_stable: bool
    pole_range: Optional[PoleRange]
    n_w: Optional[float]
    o_w: Optional[float]
    m_s_star: float
    n_w_star: float
    n_w_star_closed_form: float
    certificate: str = "large-signal"

    def to_json(self) -> dict:
        d = asdict(self)
        d["pole_range"] = None if self.pole_range is None else [self.pole_range.a_min,
                                                                  self.pole_range.a_max]
        return d


def _metrics(rng: PoleRange):
    try:
        return settling_cycles(rng), overshoot(rng)
    except UnstableRange:
        return math.inf, overshoot(rng)


def design(config: ConverterConfig, scheme: ModulationScheme, interference,
           m_s: float) -> SlopeDesignReport:
    """Certificates and worst-case metrics of one compensation slope."""
    geo = geometry(config, scheme)
    m = geo.ramp
    lam = _lam(interference)
    cont = continuity_check(m, m_s, lam)
    ff = scheme.kind == "fixed_frequency"
    m2 = geo.fall if ff else None
    rng = pole_range(m, m_s, lam, m2) if m + m_s - lam > 0 else None
    if ff:
        # no large-signal result for fixed frequency: report the small-signal verdict
        stable = bool(cont and rng is not None and rng.stable)
        ms_star = optimal_slope_fixed_frequency(lam / m, geo.fall / m) * m
        star_rng = pole_range(m, ms_star, lam, m2)
        n_star = _metrics(star_rng)[0]
        cert = "small-signal"
    else:
        stable = stability_check(m, m_s, lam) if cont else False
        ms_star = optimal_slope(lam / m) * m
        n_star = min_settling_composed(lam / m)
        cert = "large-signal"
    n_w, o_w = _metrics(rng) if rng is not None else (None, None)
    return SlopeDesignReport(m_s, cont, stable, rng, n_w, o_w, ms_star, n_star,
                             min_settling_closed_form(lam / m), cert)


def sweep(lambda_hat: float, m_s_hat_grid: Sequence[float]):
    """Normalized design diagram rows (m_s_hat, N_w, O_w)."""
    rows = []
    for ms in m_s_hat_grid:
        if 1.0 + ms - lambda_hat <= 0:
            rows.append((float(ms), math.inf, math.inf))
            continue
        n, o = _metrics(pole_range(1.0, ms, lambda_hat))
        rows.append((float(ms), n, o))
    return rows


def worst_case_settling_curve(lambda_hat: float, m_s_hat_grid: Sequence[float]) -> np.ndarray:
    return np.array([r[1] for r in sweep(lambda_hat, m_s_hat_grid)])
