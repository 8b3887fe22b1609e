"""Overshoot/settling trade-off of the three conditioning methods.

Each method is swept over its design parameter against the same
sinusoidal interference class ``(a_hat, omega_hat)``. Only designs that
carry their method's large-signal certificate enter the point cloud, and
all three use bound-based gain ranges:

* slope: pole range over ``m_s +- Lambda`` with ``Lambda = A*omega``;
* filter: exact step response with psi1 at either end of its class bound;
* overdrive: the feedback-gain bounds of the comparator model.

Outside constant off-time the filter has no large-signal certificate, so
its points are filtered by small-signal stability instead and labelled so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import filtering, overdrive, slope
from .metrics import UnstableRange, overshoot, settling_cycles
from .types import ConverterConfig, ModulationScheme, geometry

METHODS = ("slope", "filter", "overdrive")

DEFAULT_GRIDS = {
    "slope": np.round(np.arange(0.0, 1.5001, 0.01), 10),
    "filter": np.geomspace(0.05, 5.0, 60),
    "overdrive": np.geomspace(0.01, 1.0, 60),
}


@dataclass(frozen=True)
class TradeoffPoint:
    method: str
    parameter: float  # normalized m_s, tau or comparator time constant
    n_w: float
    o_w: float
    certificate: str


def slope_points(a_hat: float, omega_hat: float, grid: Sequence[float]) -> List[TradeoffPoint]:
    lam = 2 * math.pi * a_hat * omega_hat
    out = []
    for ms in grid:
        if not slope.continuity_check(1.0, ms, lam) or not slope.stability_check(1.0, ms, lam):
            continue
        rng = slope.pole_range(1.0, ms, lam)
        out.append(TradeoffPoint("slope", float(ms), settling_cycles(rng), overshoot(rng),
                                 "large-signal"))
    return out


def overdrive_points(a_hat: float, omega_hat: float, grid: Sequence[float]) -> List[TradeoffPoint]:
    # global stability in normalized form: 8 A^2 + B, with B = A/(pi omega) for sinusoids
    need = 8 * a_hat ** 2 + a_hat / (math.pi * omega_hat)
    out = []
    for th in grid:
        if th < need:
            continue
        try:
            _, _, rng = overdrive.psi_and_pole_range(1.0, a_hat, omega_hat, th)
        except overdrive.InsufficientOverdrive:
            continue
        try:
            n = settling_cycles(rng)
        except UnstableRange:
            continue
        out.append(TradeoffPoint("overdrive", float(th), n, overshoot(rng), "large-signal"))
    return out


def filter_points(config: ConverterConfig, scheme: ModulationScheme, a_hat: float,
                  omega_hat: float, grid: Sequence[float], i_avg: Optional[float] = None
                  ) -> List[TradeoffPoint]:
    geo = geometry(config, scheme)
    m, T = geo.ramp, geo.nominal
    a_ub, omega = a_hat * m * T, 2 * math.pi * omega_hat / T
    certified = scheme.kind == "constant_off_time"
    out = []
    for th in grid:
        tau = th * T
        if certified:
            op = filtering.operating_point(config, scheme, None, tau, i_avg=i_avg)
            first, second = filtering.stability_lhs(
                a_hat, omega_hat, th, scheme.t_on_min / T, op.i_p / (m * T),
                geo.uncontrolled(T) / T)
            if not (first < 0.5 and second < 0.5):
                continue
        n, o, ok = filtering.class_metrics(config, scheme, a_ub, omega, tau, i_avg)
        if not ok:
            continue
        out.append(TradeoffPoint("filter", float(th), n, o,
                                 "large-signal" if certified else "small-signal"))
    return out


def pareto_front(points: Sequence[TradeoffPoint]) -> List[TradeoffPoint]:
    """Points not dominated in (n_w, o_w); identical points all stay."""
    P = np.array([[p.n_w, p.o_w] for p in points], dtype=float)
    keep = []
    for i, p in enumerate(P):
        dominated = np.any(np.all(P <= p, axis=1) & np.any(P < p, axis=1))
        if not dominated:
            keep.append(points[i])
    return keep


def front_counts(points: Sequence[TradeoffPoint]) -> Dict[str, int]:
    front = pareto_front(points) if points else []
    return {k: sum(1 for p in front if p.method == k) for k in METHODS}


def compare(config: ConverterConfig, scheme: ModulationScheme, a_hat: float, omega_hat: float,
            grids: Optional[dict] = None, i_avg: Optional[float] = None) -> List[TradeoffPoint]:
    g = dict(DEFAULT_GRIDS)
    g.update(grids or {})
    pts = (slope_points(a_hat, omega_hat, g["slope"])
           + filter_points(config, scheme, a_hat, omega_hat, g["filter"], i_avg)
           + overdrive_points(a_hat, omega_hat, g["overdrive"]))
    return sorted(pts, key=lambda p: (METHODS.index(p.method), p.parameter))


def dominates(counts: Dict[str, int], winners: Sequence[str], loser: str) -> bool:
    """Every winner holds more front points than the loser."""
    return all(counts[w] > counts[loser] for w in winners)
