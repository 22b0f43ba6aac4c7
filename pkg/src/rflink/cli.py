"""Command-line entry point: run, sweep, analyze, budget, spectrum.

Exit codes::

    0  success (also an empty sweep)
    2  usage error
    3  scenario validation error
    4  loop instability
    5  power budget failure
    6  output directory exists (use --force)
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config
from .compensator import PS, LoopInstabilityError, dispersion_floor, run_link
from .laser_spectrum import (
    detected_rf,
    differential_delay,
    max_line_power_fraction,
    sideband_amplitudes,
)
from .link_topology import power_budget, scaling_forecast
from .noise_models import DAY, PhaseSeries, TimeGrid
from .stability import CI_CONVENTION, merge_tables, overlapping_adev, psd_phase

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_BUDGET, EXIT_EXISTS = 0, 2, 3, 4, 5, 6


class OutputExists(RuntimeError):
    pass


def _prepare_out(path, force):
    out = Path(path)
    if out.exists():
        if not force:
            raise OutputExists(f"{out} exists; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True)
    return out


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_meta(path, items):
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in items:
            fh.write(f"{k} = {_fmt(v)}\n")


def read_meta(path):
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if " = " in line and not line.startswith(" "):
                k, v = line.rstrip("\n").split(" = ", 1)
                meta[k] = v
    return meta


def _error_snr(scn):
    """Fibre-phase to detection-noise amplitude ratio in the error signal at 1 Hz."""
    s = scn.setup
    f_b = s.backward_rf
    fib = s.noise.fiber
    # delay PSD of the reciprocal fibre noise at 1 Hz, seen twice in the round trip
    sx = sum(fib.psd_spec().values())
    fiber_phase = 4.0 * sx * (2.0 * math.pi * f_b) ** 2
    det = 10.0 ** (s.noise.floor.system_floor_psd_db / 10.0)
    return math.sqrt(fiber_phase / det) if det > 0 else math.inf


def execute(scn, out, force=False):
    """Run one scenario into ``out``; returns (exit code, summary dict)."""
    out = _prepare_out(out, force)
    setup = scn.setup
    budget = power_budget(setup.topology, setup.laser, setup.noise.floor.system_floor_psd_db)
    (out / "budget.txt").write_text(budget.text(), encoding="utf-8")
    meta = [
        ("name", scn.name), ("config_hash", scn.config_hash), ("seed", scn.seed),
        ("version", __version__), ("forward_rf_hz", setup.forward_rf),
        ("backward_rf_hz", setup.backward_rf),
        ("roundtrip_delay_s", setup.topology.roundtrip_delay),
        ("ci_convention", CI_CONVENTION),
    ]
    summary = {"status": "ok"}
    if not budget.passed:
        write_meta(out / "meta.txt", meta + [("status", "budget_failure")])
        summary["status"] = "budget_failure"
        return EXIT_BUDGET, summary
    try:
        res = run_link(setup, scn.seed, scn.duration, scn.dt, scn.fast_duration, scn.fast_dt,
                       scn.crossover)
    except LoopInstabilityError as exc:
        write_meta(out / "meta.txt", meta + [("status", "loop_instability"), ("detail", exc)])
        summary["status"] = "loop_instability"
        return EXIT_UNSTABLE, summary
    res.long.to_csv(out / "samples.csv")
    if res.measured_fast is not None:
        m = res.measured_fast
        with open(out / "samples_fast.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "remote_phase_rad"])
            for t, v in zip(m.grid.t, m.values):
                w.writerow([repr(float(t)), repr(float(v))])
        psd = psd_phase(res.fast.remote_phase)
    else:
        psd = psd_phase(res.long.remote_phase)
    res.allan.to_csv(out / "allan.csv")
    psd.to_csv(out / "psd.csv")
    flags = dict(res.long.saturation_flags)
    if res.fast is not None:
        for k, v in res.fast.saturation_flags.items():
            flags[k] = flags[k] or v
    lm = res.long.metadata
    meta += [
        ("status", "ok"), ("compliant", res.compliant), ("compensator", setup.compensator),
        ("loop_model", res.long.loop_model),
        ("loop_model_fast", res.fast.loop_model if res.fast is not None else "none"),
        ("kp", lm["kp"]), ("ki", lm["ki"]),
        ("fast_saturated", flags["fast_saturated"]), ("slow_saturated", flags["slow_saturated"]),
        ("crossover_s", res.crossover),
        ("max_fast_ps", float(np.max(np.abs(res.long.fast))) / PS),
        ("max_slow_ps", float(np.max(np.abs(res.long.slow))) / PS),
    ]
    with open(out / "meta.txt", "w", encoding="utf-8") as fh:
        for k, v in meta:
            fh.write(f"{k} = {_fmt(v)}\n")
        fh.write("config:\n")
        for line in scn.canonical_text().splitlines():
            fh.write("  " + line + "\n")
    summary.update(
        sigma_1s=_at(res.allan, 1.0), sigma_1day=_at(res.allan, DAY), compliant=res.compliant,
    )
    return EXIT_OK, summary


def _at(table, tau):
    try:
        return table.at(tau)
    except KeyError:
        return float("nan")


# ------------------------------------------------------------------ commands


def cmd_run(args):
    scn = config.load(args.scenario, seed=args.seed)
    out = args.out or os.path.join("out", scn.name)
    code, summary = execute(scn, out, args.force)
    if code == EXIT_OK:
        print(f"{scn.name}: sigma_y(1 s) = {summary['sigma_1s']:.3g}, "
              f"sigma_y(1 day) = {summary['sigma_1day']:.3g} -> {out}")
    else:
        print(f"{scn.name}: {summary['status']} (see {out})", file=sys.stderr)
    return code


def _linked_overrides(base, param, value):
    """Overrides for one sweep value.

    The remote synthesizes the backward RF coherently from the received
    forward RF, so sweeping the forward frequency keeps their ratio.
    """
    ov = {param: value}
    if param == "modulation.forward_rf_hz":
        m = base.setup.topology.modulation
        ov["modulation.backward_rf_hz"] = repr(float(value) * m.backward_rf / m.forward_rf)
    return ov


def _sweep_item(job):
    ref, overrides, value, seed, out, force = job
    try:
        scn = config.load(ref, overrides=overrides, seed=seed)
    except config.ConfigError as exc:
        return value, {"status": f"invalid: {exc}"}
    code, summary = execute(scn, out, force)
    # the dispersion floor depends on the lasers and D*L only, so it is
    # reported even when the link itself fails its budget
    d = dispersion_floor(scn.setup, scn.seed, scn.duration, scn.dt, scn.fast_duration,
                         scn.fast_dt, scn.crossover)
    summary["dispersion_floor_1s"] = _at(d, 1.0)
    summary["error_snr"] = _error_snr(scn)
    return value, summary


def cmd_sweep(args):
    values = [v.strip() for v in (args.values or "").split(",") if v.strip()]
    base = config.load(args.scenario, seed=args.seed)
    sec, _, key = args.param.rpartition(".")
    kind = config.SCHEMA.get(sec, {}).get(key) or config.ELEMENT_SCHEMA.get(
        sec.split(".", 1)[0], {}).get(key)
    if sec not in base.raw or key not in base.raw[sec]:
        raise config.ConfigError(f"parameter {args.param!r} does not address a config key")
    if kind not in (config.FLOAT, config.INT):
        raise config.ConfigError(f"parameter {args.param!r} is not numeric")
    for v in values:
        try:
            float(v)
        except ValueError:
            raise config.ConfigError(f"sweep value {v!r} is not numeric") from None
    if not values:
        print("empty value list: nothing to do")
        return EXIT_OK
    root = Path(args.out or os.path.join("out", f"sweep_{base.name}"))
    if root.exists() and not args.force:
        raise OutputExists(f"{root} exists; pass --force to overwrite")
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    ref = str(config.resolve(args.scenario))
    jobs = [(ref, _linked_overrides(base, args.param, v), v, args.seed, root / f"{key}={v}", True)
            for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_item, jobs))
    else:
        results = [_sweep_item(j) for j in jobs]
    cols = ["value", "status", "sigma_1s", "sigma_1day", "dispersion_floor_1s", "error_snr"]
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter"] + cols)
        for value, s in results:
            s = dict(s, value=value)
            w.writerow([args.param] + [_fmt(s.get(c, float("nan"))) for c in cols])
    print(f"sweep of {args.param} over {len(values)} value(s) -> {root / 'summary.csv'}")
    return EXIT_OK


def _read_samples(path, carrier):
    data = np.genfromtxt(path, delimiter=",", names=True)
    t = np.atleast_1d(data["t"])
    if len(t) < 2:
        raise config.ConfigError(f"{path}: need at least two samples")
    dt = float(t[1] - t[0])
    grid = TimeGrid(dt, len(t), float(t[0]))
    return PhaseSeries(grid, np.atleast_1d(data["remote_phase_rad"]), "rad", carrier)


def cmd_analyze(args):
    src = Path(args.samples)
    run_dir = src if src.is_dir() else src.parent
    samples = run_dir / "samples.csv" if src.is_dir() else src
    if not samples.is_file():
        raise config.ConfigError(f"no samples file at {samples}")
    carrier = args.carrier
    if carrier is None and (run_dir / "meta.txt").is_file():
        carrier = float(read_meta(run_dir / "meta.txt")["forward_rf_hz"])
    if carrier is None:
        raise config.ConfigError("carrier frequency unknown: pass --carrier")
    long = _read_samples(samples, carrier)
    table = overlapping_adev(long)
    fast_file = run_dir / "samples_fast.csv"
    if src.is_dir() and fast_file.is_file():
        fast = _read_samples(fast_file, carrier)
        table = merge_tables(overlapping_adev(fast), table, args.crossover)
    out = _prepare_out(args.out or run_dir / "analysis", args.force)
    table.to_csv(out / "allan.csv")
    psd_phase(long).to_csv(out / "psd.csv")
    for tau, s, n in zip(table.taus, table.sigma, table.noise_types):
        print(f"{tau:12.6g} s  {s:.4g}  {n}")
    return EXIT_OK


def cmd_budget(args):
    scn = config.load(args.scenario)
    topo = scn.setup.topology
    report = power_budget(topo, scn.setup.laser, scn.setup.noise.floor.system_floor_psd_db)
    text = report.text()
    fc = scaling_forecast(topo.total_length_km)
    text += (f"scaling forecast (heuristic) at {fc['length_km']:.0f} km: bandwidth "
             f"{fc['loop_bandwidth_hz']:.1f} Hz, {fc['n_edfa']} EDFA(s), suppression at 1 s "
             f"<= x{fc['max_noise_suppression_at_1s']:.1f}\n")
    if args.out:
        out = _prepare_out(args.out, args.force)
        (out / "budget.txt").write_text(text, encoding="utf-8")
        report.to_csv(out / "budget.csv")
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_BUDGET


def cmd_spectrum(args):
    scn = config.load(args.scenario)
    laser = scn.setup.laser
    m = laser.frequency_mod_index if args.m is None else args.m
    mi = laser.amplitude_mod_index if args.mi is None else args.mi
    coeffs = sideband_amplitudes(m, mi)
    omega = 2.0 * math.pi * scn.setup.forward_rf
    lines = [f"m = {m}, m_i = {mi}, truncation order {coeffs.truncation_order}",
             f"max single-line power fraction {max_line_power_fraction(coeffs):.4f}"]
    total = 0.0
    for s in scn.setup.topology.sections:
        dtd = differential_delay(s.dispersion, s.length_km, laser.wavelength_nm,
                                 laser.carrier_frequency_hz, omega)
        total += dtd
        lines.append(f"section {s.name}: {s.length_km} km, differential delay {dtd / PS:.3f} ps")
    rf = detected_rf(coeffs, total, omega, 0.0, laser.omega0)
    lines.append(f"total differential delay {total / PS:.3f} ps; detected RF amplitude "
                 f"{rf.total_amplitude:.6f} (A_I {rf.inphase_amplitude:.6f}, "
                 f"A_Q {rf.quadrature_amplitude:.3e})")
    if args.out:
        p = Path(args.out)
        if p.exists() and not args.force:
            raise OutputExists(f"{p} exists; pass --force to overwrite")
        coeffs.to_csv(p)
        lines.append(f"coefficients -> {p}")
    print("\n".join(lines))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="rflink", description="Round-trip compensated RF-over-fibre link simulator")
    p.add_argument("--version", action="version", version=f"rflink {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True,
                            help="scenario file or shipped name (" + ", ".join(config.shipped_names()) + ")")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite existing output")

    sp = sub.add_parser("run", help="simulate one scenario")
    common(sp)
    sp.add_argument("--seed", type=int, help="override the scenario seed")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a scenario over values of one numeric key")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--param", required=True,
                    help="section.key, e.g. fiber.span1.length_km; sweeping "
                         "modulation.forward_rf_hz keeps the backward/forward RF ratio")
    sp.add_argument("--values", default="", help="comma-separated values")
    sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="recompute Allan deviation and PSD from samples.csv")
    common(sp, scenario=False)
    sp.add_argument("--samples", required=True, help="run directory or samples CSV")
    sp.add_argument("--carrier", type=float, help="carrier frequency (Hz) if meta.txt is absent")
    sp.add_argument("--crossover", type=float, default=64.0)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("budget", help="power budget and scaling forecast only")
    common(sp)
    sp.set_defaults(func=cmd_budget)

    sp = sub.add_parser("spectrum", help="sideband coefficient table and differential delays")
    common(sp)
    sp.add_argument("--m", type=float, help="FM index override")
    sp.add_argument("--mi", type=float, help="AM index override")
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except config.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputExists as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS


if __name__ == "__main__":
    sys.exit(main())
