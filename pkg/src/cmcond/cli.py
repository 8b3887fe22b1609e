"""Command-line front end.

Every run writes its data files plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 invalid input, 3 infeasible design, 4 trigger
starvation or divergence during a requested simulation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import compare as cmp
from . import config as cfgmod
from . import filtering, overdrive, sim, slope
from . import interference as itf
from .metrics import measure_transient, orbit_period, spectrum
from .types import (
    LowPassFilter,
    OverdriveDelay,
    SlopeComp,
    ValidationError,
    geometry,
    method_name,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_SIM = 0, 2, 3, 4


class Infeasible(RuntimeError):
    def __init__(self, report: dict):
        super().__init__(report.get("reason", "infeasible"))
        self.report = report


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: List[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return "nan"
    return v


def _hash_inputs(config_dict, args) -> str:
    payload = {"config": config_dict,
               "args": {k: v for k, v in sorted(vars(args).items())
                        if k not in ("out", "func", "config") and not callable(v)}}
    blob = json.dumps(_clean(payload), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out: Path, args, config_dict, argv) -> None:
    write_json(out / "manifest.json", {
        "tool": "cmcond",
        "version": __version__,
        "subcommand": args.command + (f" {args.method}" if args.command == "design" else ""),
        "argv": list(argv),
        "config_path": args.config,
        "preset": args.preset,
        "seed": args.seed,
        "out": str(out),
        "input_hash": _hash_inputs(config_dict, args),
    })


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def config_dict(args) -> Optional[dict]:
    data = cfgmod.preset(args.preset) if args.preset else None
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise ValidationError("--config", str(e)) from None
        except json.JSONDecodeError as e:
            raise ValidationError("/", f"invalid JSON: {e}") from None
        if data and isinstance(user, dict):
            data = cfgmod.merge(data, user)
            # these sections are alternatives, not refinements
            for key in ("interference", "method"):
                if key in user:
                    data[key] = user[key]
        else:
            data = user
    return data


def load_run(args, data):
    if data is None:
        raise ValidationError("--config", "a config file or --preset is required")
    run = cfgmod.load_dict(data)
    spec = run.interference
    if spec is not None and args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=int(args.seed))
    method = run.method
    q = cfgmod.parse_quantity
    if getattr(args, "no_conditioning", False):
        method = SlopeComp(0.0)
    if getattr(args, "m_s", None) is not None:
        method = SlopeComp(q(args.m_s, "A/s", "--m-s"))
    if getattr(args, "tau", None) is not None:
        method = LowPassFilter(q(args.tau, "s", "--tau"))
    if getattr(args, "tau_c", None) is not None:
        method = OverdriveDelay(q(args.tau_c, "s", "--tau-c"),
                                q(args.v_trig or "10mV", "V", "--v-trig"),
                                q(args.t_d or 0.0, "s", "--t-d"))
    return run.converter, run.scheme, spec, method, run.simulation


def _class_spec(spec, geo):
    """Spec with a concrete waveform: a sinusoid at the band edge when none is given."""
    if spec is None:
        raise ValidationError("/interference", "required for this command")
    if spec.waveform is None:
        wf = itf.Sinusoid(spec.a_ub, spec.omega_l)
        return itf.with_waveform(spec, wf)
    return spec


def _label(method) -> str:
    if isinstance(method, SlopeComp) and method.m_s == 0:
        return "none"
    return method_name(method)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args, data, out: Path):
    conv, scheme, spec, method, simcfg = load_run(args, data)
    n = args.cycles or simcfg["n_cycles"]
    i_cmd = simcfg["i_command"]
    cmds = np.full(n, i_cmd)
    step_to = cfgmod.parse_quantity(args.step_to, "A", "--step-to") if args.step_to else simcfg["i_step"]
    step_at = args.step_at if args.step_at is not None else (simcfg["step_at"] or n // 2)
    if step_to is not None:
        if not 0 < step_at < n:
            raise ValidationError("--step-at", "must fall inside the run")
        cmds[step_at:] = step_to
    geo = geometry(conv, scheme)
    summary = {"method": _label(method), "n_cycles_requested": n}
    code = EXIT_OK
    try:
        trace = sim.run_cycles(conv, scheme, spec, method, cmds, n, dense=True,
                               points_per_period=simcfg["points_per_period"])
    except sim.TriggerStarvation as e:
        summary.update(terminated_by="starvation", error=str(e))
        write_json(out / "summary.json", summary)
        return EXIT_SIM
    write_csv(out / "trace.csv",
              ["n", "t_on", "i_extremum", "i_command", "trigger_time_deviation", "saturated"],
              [(s.n, s.t_on, s.i_extremum, s.i_command, s.trigger_time_deviation, s.saturated)
               for s in trace.samples])
    summary["terminated_by"] = trace.terminated_by
    summary["n_cycles_run"] = len(trace.samples)
    if trace.terminated_by == "diverged":
        code = EXIT_SIM
    else:
        t, i = trace.dense_waveform
        write_csv(out / "waveform.csv", ["t", "i"], zip(t, i))
        ext = trace.extremum
        first = step_at if step_to is not None else 0
        tail = ext[first + (len(ext) - first) // 2:]
        try:
            summary["orbit_period"] = orbit_period(tail[-64:], 8, rtol=1e-6)
        except ValueError:
            summary["orbit_period"] = None
        summary["tail_extremum_mean"] = float(np.mean(tail))
        summary["tail_extremum_ptp"] = float(np.ptp(tail))
        f0 = 1.0 / (geo.nominal + geo.uncontrolled(geo.nominal))
        # spectrum over the last half of the run, or the last quarter after a step
        frac = 0.75 if step_to is not None else 0.5
        mask = t >= t[0] + frac * (t[-1] - t[0])
        try:
            rep = spectrum(t[mask], i[mask], f0, max_q=args.max_q)
            write_csv(out / "spectrum.csv", ["freq_hz", "magnitude"], zip(rep.freq_hz, rep.magnitude))
            summary["subharmonic_orders"] = rep.order_strings()
            summary["fundamental_hz"] = f0
        except ValueError as e:
            summary["subharmonic_orders"] = None
            summary["spectrum_note"] = str(e)
        if step_to is not None:
            mt = measure_transient(trace, step_index=step_at)
            summary["step"] = {"n_settle": mt.n_settle, "overshoot": mt.overshoot,
                               "n_settle_fractional": mt.n_settle_fractional,
                               "saturated": mt.saturated}
    write_json(out / "summary.json", summary)
    return code


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


def _pick(rows, n_idx, o_idx, o_max):
    ok = [r for r in rows if math.isfinite(r[n_idx]) and (o_max is None or r[o_idx] <= o_max)]
    if not ok:
        return None
    return min(ok, key=lambda r: (r[n_idx], r[o_idx]))


def design_slope(args, data, out: Path):
    conv, scheme, spec, method, _ = load_run(args, data)
    if spec is None:
        raise ValidationError("/interference", "required for design")
    geo = geometry(conv, scheme)
    lam_hat = spec.lambda_ub / geo.ramp
    grid = np.round(np.arange(0.0, args.max_slope + 1e-9, args.slope_step), 10)
    rows = slope.sweep(lam_hat, grid)
    write_csv(out / "sweep.csv", ["m_s_hat", "n_w", "o_w"], rows)
    # only certified slopes are eligible for a recommendation
    cert = [r for r in rows if lam_hat < 0.5 + r[0]]
    best = _pick(cert, 1, 2, args.max_overshoot)
    m_s = method.m_s if isinstance(method, SlopeComp) and method.m_s > 0 else (
        best[0] * geo.ramp if best else 0.0)
    rep = slope.design(conv, scheme, spec, m_s)
    report = {
        "method": "slope",
        "step1": "first-event latching is always on",
        "step2_continuity": rep.continuous,
        "step3_stability": rep.gas_stable if rep.continuous else None,
        "certificate": rep.certificate,
        "lambda_hat": lam_hat,
        "evaluated": rep.to_json(),
        "recommended_m_s_hat": None if best is None else best[0],
        "recommended_m_s": None if best is None else best[0] * geo.ramp,
        "optimal_m_s_hat": slope.optimal_slope(lam_hat),
    }
    if best is None:
        report["reason"] = "no certified slope meets the overshoot limit"
        write_json(out / "report.json", report)
        raise Infeasible(report)
    write_json(out / "report.json", report)
    return EXIT_OK


def _hat_grid(text, default):
    if text is None:
        return default
    try:
        return np.array(sorted(float(x) for x in text.split(",")))
    except ValueError:
        raise ValidationError("--grid", "expected comma-separated numbers") from None


def design_filter(args, data, out: Path):
    conv, scheme, spec, _, simcfg = load_run(args, data)
    geo = geometry(conv, scheme)
    spec = _class_spec(spec, geo)
    T = geo.nominal
    grid = _hat_grid(args.grid, np.round(np.geomspace(0.1, 5.0, 30), 6))
    i_max = cfgmod.parse_quantity(args.i_max, "A", "--i-max") if args.i_max else None
    rows = filtering.design_sweep(conv, scheme, spec, grid * T, i_max, n_phases=args.phases,
                                  simulate=args.simulate)
    write_csv(out / "sweep.csv",
              ["tau_hat", "n_w_theory", "o_w_theory", "n_w_sim", "o_w_sim", "stable"],
              [(r.tau_hat, r.n_w_theory, r.o_w_theory, r.n_w_sim, r.o_w_sim, r.stable)
               for r in rows])
    cofT = scheme.kind == "constant_off_time"
    cand = [r for r in rows if r.small_signal_stable and (r.stable or not cofT)
            and (args.max_overshoot is None or r.o_w_theory <= args.max_overshoot)]
    best = min(cand, key=lambda r: (r.n_w_theory, r.o_w_theory)) if cand else None
    report = {
        "method": "filter",
        "step1": "first-event latching is always on",
        "certificate": "large-signal" if cofT else "no large-signal certificate (small-signal only)",
        "step2_continuity": None,
        "step3_stability": None,
        "recommended_tau_hat": None if best is None else best.tau_hat,
        "recommended_tau": None if best is None else best.tau_hat * T,
        "interior_minimum": _interior_min([r.n_w_theory for r in rows]),
        "rows": [r.to_json() for r in rows],
    }
    if best is not None and cofT:
        imax = i_max if i_max is not None else filtering.operating_point(
            conv, scheme, None, best.tau_hat * T).i_p
        cont = filtering.continuity_condition(conv, scheme, spec, best.tau_hat * T, imax)
        report["step2_continuity"] = cont
        report["step3_stability"] = best.stable if cont else None
    if best is None:
        report["reason"] = "no time constant in the grid meets the constraints"
        write_json(out / "report.json", report)
        raise Infeasible(report)
    write_json(out / "report.json", report)
    return EXIT_OK


def _interior_min(values):
    v = np.asarray(values, dtype=float)
    if v.size < 3 or not np.any(np.isfinite(v)):
        return False
    k = int(np.nanargmin(np.where(np.isfinite(v), v, np.inf)))
    return bool(0 < k < v.size - 1 and v[0] > v[k] and v[-1] > v[k])


def design_overdrive(args, data, out: Path):
    conv, scheme, spec, _, _ = load_run(args, data)
    if spec is None:
        raise ValidationError("/interference", "required for design")
    geo = geometry(conv, scheme)
    v_trig = cfgmod.parse_quantity(args.v_trig or "10mV", "V", "--v-trig")
    rep = overdrive.size_for_speed(conv, scheme, spec, v_trig, margin=args.margin)
    tau_b = geo.ramp * geo.nominal ** 2 * conv.r_sense / (2 * v_trig)
    grid = _hat_grid(args.grid, np.round(np.geomspace(0.01, 2.0, 30), 6))
    rows = overdrive.sweep(conv, scheme, spec, v_trig, grid * tau_b)
    write_csv(out / "sweep.csv", ["tau_hat", "n_w", "o_w", "t_od_max_hat", "stable"], rows)
    report = {
        "method": "overdrive",
        "step1": "first-event latching is always on",
        "step2_continuity": rep.continuous_certified,
        "step3_stability": rep.gas_stable,
        "stability_bound_charge": overdrive.stability_bound(geo.ramp, spec),
        "stability_bound_v_trig_tau": overdrive.stability_bound(geo.ramp, spec) * conv.r_sense,
        "design": rep.to_json(),
        "tau_hat": rep.charge / (geo.ramp * geo.nominal ** 2 / 2),
    }
    # the minimum-interval floor t_od_max must fit inside the nominal interval
    best = _pick([r for r in rows if r[4] and r[1] is not None and r[3] <= 1.0], 1, 2, None)
    report["recommended_tau_hat"] = None if best is None else best[0]
    report["recommended_tau_c"] = None if best is None else best[0] * tau_b
    write_json(out / "report.json", report)
    if not rep.feasible:
        raise Infeasible(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare, probe
# ---------------------------------------------------------------------------

REGIMES = ((0.01, 3.0), (0.12, 1.0))


def cmd_compare(args, data, out: Path):
    conv, scheme, _, _, _ = load_run(args, data)
    if args.a_hat is not None or args.omega_hat is not None:
        if args.a_hat is None or args.omega_hat is None:
            raise ValidationError("--a-hat", "give both --a-hat and --omega-hat")
        regimes = ((args.a_hat, args.omega_hat),)
    else:
        regimes = REGIMES
    rows, fronts = [], []
    for a_hat, w_hat in regimes:
        pts = cmp.compare(conv, scheme, a_hat, w_hat)
        counts = cmp.front_counts(pts)
        fronts.append({"a_hat": a_hat, "omega_hat": w_hat, "front_counts": counts})
        rows += [(a_hat, w_hat, p.method, p.parameter, p.n_w, p.o_w, p.certificate) for p in pts]
    write_csv(out / "tradeoff.csv",
              ["a_hat", "omega_hat", "method", "parameter", "n_w", "o_w", "certificate"], rows)
    write_json(out / "front.json", {"regimes": fronts})
    return EXIT_OK


def _draw_waveform(rng, spec):
    """Random member of the class: trapezoid or sinusoid, frequency in [w_l, 3 w_l]."""
    om = spec.omega_l * rng.uniform(1.0, 3.0)
    phase = rng.uniform(0, 2 * math.pi)
    amp = spec.a_ub * rng.uniform(0.5, 1.0)
    if rng.uniform() < 0.5 and spec.lambda_ub > 0:
        slew_min = 2 * amp * om / math.pi
        if slew_min <= spec.lambda_ub:
            return itf.Trapezoid(amp, om, rng.uniform(slew_min, spec.lambda_ub), phase)
    amp = min(amp, spec.lambda_ub / om) if spec.lambda_ub > 0 else amp
    return itf.Sinusoid(amp, om, phase)


def _probe_one(job):
    conv, scheme, spec, method, i_cmd, n_cycles, k, seed = job
    rng = np.random.default_rng([seed, k])
    wf = _draw_waveform(rng, spec)
    s = itf.make_spec(wf, a_ub=spec.a_ub, omega_l=spec.omega_l, lambda_ub=spec.lambda_ub,
                      b_functional_value=spec.b_functional if math.isfinite(spec.b_functional) else None)
    try:
        tr = sim.run_cycles(conv, scheme, s, method, [i_cmd], n_cycles, deviation=False,
                            stop_when_converged=True)
    except sim.TriggerStarvation:
        return k, "starvation", wf
    if tr.terminated_by == "diverged":
        return k, "diverged", wf
    if tr.terminated_by == "converged":
        return k, "ok", wf
    ext = tr.extremum[-64:]
    p = orbit_period(ext, 8, rtol=1e-6)
    return k, ("ok" if p == 1 else "subharmonic"), wf


def _certified(conv, scheme, spec, method):
    geo = geometry(conv, scheme)
    if isinstance(method, SlopeComp):
        return bool(slope.continuity_check(geo.ramp, method.m_s, spec.lambda_ub)
                    and slope.stability_check(geo.ramp, method.m_s, spec.lambda_ub))
    if isinstance(method, OverdriveDelay):
        return method.charge(conv.r_sense) >= overdrive.stability_bound(geo.ramp, spec)
    try:
        op = filtering.operating_point(conv, scheme, None, method.tau)
        return filtering.stability_condition(conv, scheme, spec, method.tau, op.i_p)
    except filtering.OutOfTheoremScope:
        return None


def cmd_probe(args, data, out: Path):
    conv, scheme, spec, method, simcfg = load_run(args, data)
    if spec is None:
        raise ValidationError("/interference", "required for probing")
    if args.draws < 1:
        raise ValidationError("--draws", "must be >= 1")
    seed = args.seed if args.seed is not None else spec.seed
    jobs = [(conv, scheme, spec, method, simcfg["i_command"], args.cycles, k, seed)
            for k in range(args.draws)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_probe_one, jobs))
    else:
        results = [_probe_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    failures = [r for r in results if r[1] != "ok"]
    report = {
        "method": _label(method),
        "draws": args.draws,
        "failures": len(failures),
        "failure_fraction": len(failures) / args.draws,
        "certified": _certified(conv, scheme, spec, method),
        "kinds": {k: sum(1 for r in failures if r[1] == k)
                  for k in ("diverged", "subharmonic", "starvation")},
    }
    write_json(out / "probe.json", report)
    if failures:
        write_json(out / "counterexamples.json",
                   [{"draw": k, "outcome": kind, "waveform": _wf_json(wf)}
                    for k, kind, wf in failures])
    return EXIT_OK


def _wf_json(wf):
    from dataclasses import asdict
    d = asdict(wf)
    d["kind"] = type(wf).__name__
    return d


# ---------------------------------------------------------------------------
# fit-comparator, spectrum
# ---------------------------------------------------------------------------


def _read_columns(path, names):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [n for n in names if n not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(str(path), f"missing columns {missing}")
            cols = {n: [] for n in names}
            for row_no, row in enumerate(reader, start=2):
                for n in names:
                    try:
                        cols[n].append(float(row[n]))
                    except (TypeError, ValueError):
                        raise ValidationError(f"{path}:{row_no}", f"bad value in column {n}") from None
    except OSError as e:
        raise ValidationError(str(path), str(e)) from None
    return [np.array(cols[n]) for n in names]


def cmd_fit(args, data, out: Path):
    v, t = _read_columns(args.csv, ["v_od_mV", "t_od_ns"])
    try:
        p1, p2 = overdrive.fit_datasheet_delay(list(zip(v, t)))
    except overdrive.RankDeficientFit as e:
        raise ValidationError(args.csv, str(e)) from None
    write_json(out / "fit.json", {"v_trig_tau_ns_mV": p1, "t_d_ns": p2,
                                  "v_trig_tau_V_s": p1 * 1e-12, "t_d_s": p2 * 1e-9})
    return EXIT_OK


def cmd_spectrum(args, data, out: Path):
    t, i = _read_columns(args.trace, ["t", "i"])
    f0 = cfgmod.parse_quantity(args.f0, "Hz", "--f0")
    try:
        rep = spectrum(t, i, f0, max_q=args.max_q, floor_factor=args.floor)
    except ValueError as e:
        raise ValidationError("--trace", str(e)) from None
    write_csv(out / "spectrum.csv", ["freq_hz", "magnitude"], zip(rep.freq_hz, rep.magnitude))
    write_json(out / "orders.json", {"fundamental_hz": f0, "orders": rep.order_strings()})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmcond", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="start from a built-in configuration")
    p.add_argument("--seed", type=int, help="seed for random interference phases and draws")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--version", action="version", version=f"cmcond {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def method_flags(sp):
        sp.add_argument("--no-conditioning", action="store_true")
        sp.add_argument("--m-s", help="slope compensation, e.g. 10A/us")
        sp.add_argument("--tau", help="low-pass filter time constant, e.g. 50ns")
        sp.add_argument("--tau-c", help="comparator time constant C_eff/G")
        sp.add_argument("--v-trig", help="comparator trigger voltage (default 10mV)")
        sp.add_argument("--t-d", help="comparator input-independent delay")

    s = sub.add_parser("simulate", help="cycle-by-cycle simulation")
    method_flags(s)
    s.add_argument("--cycles", type=int)
    s.add_argument("--step-to", help="command after the step, e.g. 11A")
    s.add_argument("--step-at", type=int, help="cycle index of the command step")
    s.add_argument("--max-q", type=int, default=8)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("design", help="three-step conditioning design")
    dsub = d.add_subparsers(dest="method", required=True)
    ds = dsub.add_parser("slope")
    method_flags(ds)
    ds.add_argument("--max-overshoot", type=float)
    ds.add_argument("--max-slope", type=float, default=1.5, help="largest normalized slope swept")
    ds.add_argument("--slope-step", type=float, default=0.01)
    ds.set_defaults(func=design_slope)
    df = dsub.add_parser("filter")
    method_flags(df)
    df.add_argument("--grid", help="comma-separated normalized time constants")
    df.add_argument("--i-max", help="largest inductor current for the certificates")
    df.add_argument("--phases", type=int, default=16)
    df.add_argument("--simulate", action="store_true", help="add measured small-step metrics")
    df.add_argument("--max-overshoot", type=float)
    df.set_defaults(func=design_filter)
    do = dsub.add_parser("overdrive")
    method_flags(do)
    do.add_argument("--margin", type=float, default=0.05)
    do.add_argument("--grid", help="comma-separated normalized comparator time constants")
    do.set_defaults(func=design_overdrive)

    c = sub.add_parser("compare", help="overshoot/settling trade-off of the three methods")
    c.add_argument("--a-hat", type=float)
    c.add_argument("--omega-hat", type=float)
    c.set_defaults(func=cmd_compare)

    pr = sub.add_parser("probe", help="Monte-Carlo stability probe")
    method_flags(pr)
    pr.add_argument("--draws", type=int, default=100)
    pr.add_argument("--cycles", type=int, default=400)
    pr.add_argument("--jobs", type=int, default=1)
    pr.set_defaults(func=cmd_probe)

    f = sub.add_parser("fit-comparator", help="fit datasheet overdrive-delay curves")
    f.add_argument("--csv", required=True, help="CSV with columns v_od_mV,t_od_ns")
    f.set_defaults(func=cmd_fit)

    sp = sub.add_parser("spectrum", help="subharmonic orders of a waveform CSV (t,i)")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--f0", required=True, help="fundamental, e.g. 1.6667MHz")
    sp.add_argument("--max-q", type=int, default=8)
    sp.add_argument("--floor", type=float, default=10.0)
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        data = config_dict(args)
        out.mkdir(parents=True, exist_ok=True)
        code = args.func(args, data, out)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Infeasible as e:
        print(f"infeasible: {e}", file=sys.stderr)
        write_manifest(out, args, data, argv)
        return EXIT_INFEASIBLE
    write_manifest(out, args, data, argv)
    if code == EXIT_SIM:
        print("simulation ended by starvation or divergence", file=sys.stderr)
    return code
