"""Command-line interface: ``biasflip {analyze,design,simulate,sweep,eig}``.

Exit codes: 0 success, 2 usage error or an invalid double well, 3 config
parse error, 4 propagation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from biasflip.config import ConfigError, RunConfig, build_scenario, load_config
from biasflip.core import CONSTANTS
from biasflip.dynamics import PropagationConfig, write_density_csv
from biasflip.errors import (
    BiasflipError,
    NonPositiveDuration,
    NotDoubleWell,
    PropagationError,
    ValidityViolation,
)
from biasflip.experiments import (
    PRESETS,
    Scenario,
    default_config,
    run_protocol,
    simulate,
    sweep_tf,
)
from biasflip.potentials import IonQuarticParams, analyze, stationary_points, validity_report
from biasflip.protocols import ProtocolKind, build_protocol, minima_trajectory, short_time_bound
from biasflip.spectral import classify_wells, solve_stationary

log = logging.getLogger("biasflip")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PROPAGATION = 4

KINDS = [k.value for k in ProtocolKind]
TRAJECTORY_KINDS = ["polynomial", "faquad", "compensated"]


def _dump_json(data, path: Optional[Path] = None) -> str:
    text = json.dumps(data, sort_keys=True, indent=2, default=_json_default) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, ProtocolKind):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _parse_tf_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad t_f list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (INI or JSON)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    common.add_argument("--well", choices=["left", "right"])
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument(
        "--exact-eigenstates",
        dest="exact_eigenstates",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="use numerically exact well ground states as initial and target states "
        "(default); --no-exact-eigenstates uses harmonic states at the local frequency",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="biasflip", description="Transport by inverting the bias of a double well.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="well geometry and validity report")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")

    p = sub.add_parser("design", parents=[common], help="write protocol trajectories")
    p.add_argument("--protocol", choices=TRAJECTORY_KINDS, action="append", help="repeatable; default all")
    p.add_argument("--tf", type=float, help="duration in s")
    p.add_argument("--samples", type=int, help="samples per trajectory")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    p = sub.add_parser("simulate", parents=[common], help="propagate one protocol")
    p.add_argument("--protocol", choices=KINDS)
    p.add_argument("--tf", type=float, help="duration in s")
    p.add_argument("--dt", type=float, help="time step in s")
    p.add_argument("--snapshots", action="store_true", help="write density.csv")

    p = sub.add_parser("sweep", parents=[common], help="fidelity versus duration")
    p.add_argument("--protocol", choices=KINDS, action="append", help="repeatable; default all but sudden")
    p.add_argument("--tf-list", type=_parse_tf_list, help="comma-separated durations in s")
    p.add_argument("--tf-min", type=float)
    p.add_argument("--tf-max", type=float)
    p.add_argument("--tf-points", type=int, default=10)
    p.add_argument("--workers", type=int, help="threads (default $BIASFLIP_THREADS or 1)")

    p = sub.add_parser("eig", parents=[common], help="stationary spectrum")
    p.add_argument("--control", type=float, help="control value in SI units (default: initial value)")
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--method", choices=["fourier", "fd"], default="fourier")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    sc = cfg.scenario
    if args.preset:
        sc = replace(sc, preset=args.preset)
    if args.well:
        sc = replace(sc, well=args.well)
    if args.exact_eigenstates is not None:
        sc = replace(sc, target_states="exact" if args.exact_eigenstates else "harmonic")
    pr = cfg.protocol
    kind = getattr(args, "protocol", None)
    if isinstance(kind, str):
        pr = replace(pr, kind=kind)
    if getattr(args, "tf", None) is not None:
        pr = replace(pr, t_final_s=args.tf)
    num = cfg.numerics
    if getattr(args, "dt", None) is not None:
        num = replace(num, dt_s=args.dt)
    out = cfg.output
    if args.out is not None:
        out = replace(out, directory=str(args.out))
    return RunConfig(sc, pr, num, out)


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output.directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _endpoints(cfg: RunConfig, scenario: Scenario) -> tuple[float, float]:
    l0 = cfg.protocol.lambda_start_si
    l0 = scenario.lambda0 if l0 is None else l0
    l1 = cfg.protocol.lambda_end_si
    return l0, (-l0 if l1 is None else l1)


def _spec(cfg: RunConfig, scenario: Scenario, kind: str, tf: Optional[float]):
    l0, l1 = _endpoints(cfg, scenario)
    if ProtocolKind(kind) is ProtocolKind.SUDDEN:
        return build_protocol(kind, l0, l1, 0.0)
    if tf is None:
        raise NonPositiveDuration("--tf (or protocol.t_final_s) is required")
    return build_protocol(kind, l0, l1, tf)


def _prop_config(cfg: RunConfig, scenario: Scenario, tf: float, snapshots: bool) -> PropagationConfig:
    base = default_config(scenario, tf, snapshots=snapshots, store_every=cfg.numerics.snapshot_stride)
    if cfg.numerics.dt_s is None:
        return base
    return replace(base, dt=scenario.scale.to_internal(cfg.numerics.dt_s, "time"))


# --------------------------------------------------------------------------
# commands


def cmd_analyze(args, cfg: RunConfig) -> int:
    scenario = build_scenario(cfg)
    params = scenario.params
    l0, _ = _endpoints(cfg, scenario)
    wa = analyze(params.with_control(l0))
    report = validity_report(params, abs(l0))
    data = {
        "scenario": scenario.describe(),
        "analysis": wa.as_dict(),
        "validity": report.as_dict(),
        "period_s": scenario.period,
    }
    if isinstance(params, IonQuarticParams):
        data["short_time_bound_s"] = short_time_bound(params, abs(l0))
    if cfg.output.directory != "." or args.out is not None:
        _dump_json(data, _out_dir(cfg) / "analysis.json")
    if args.json:
        sys.stdout.write(_dump_json(data))
        return EXIT_OK
    u = params.control_unit
    print(f"scenario        {scenario.name} ({params.kind}), {scenario.well} well")
    print(f"control         {wa.control:.6g} {u}")
    print(f"minima          x- = {wa.x_minus:.6e} m, x+ = {wa.x_plus:.6e} m")
    print(f"barrier         {wa.barrier_x:.6e} m")
    print(f"distance D      {wa.distance:.6e} m")
    print(f"bias            {wa.bias:.6e} J")
    print(f"Omega-/2pi      {wa.omega_minus / (2 * math.pi):.6e} Hz")
    print(f"Omega+/2pi      {wa.omega_plus / (2 * math.pi):.6e} Hz")
    print(f"displacement d  {wa.displacement:.6e} m")
    print(f"ratio R = d/a0  {wa.ratio:.6f}")
    print(f"validity        {report.status}")
    print(f"  two-minima margin    {report.two_minima_margin:.4g}")
    print(f"  parallel margin      {report.parallel_margin:.4g}")
    print(f"  frequency variation  {report.frequency_variation / (2 * math.pi):.4g} Hz")
    print(f"  distance variation   {report.distance_variation:.4g} m")
    if "short_time_bound_s" in data:
        print(f"short-time bound {data['short_time_bound_s']:.4g} s")
    return EXIT_OK


GNUPLOT_TEMPLATE = """set datafile separator ','
set key autotitle columnhead
set xlabel 't (s)'
set multiplot layout 2,1
set ylabel 'control'
plot {control}
set ylabel 'x0 (m)'
plot {position}
unset multiplot
"""


def cmd_design(args, cfg: RunConfig) -> int:
    scenario = build_scenario(cfg)
    kinds = args.protocol or ([cfg.protocol.kind] if args.config and cfg.protocol.kind in TRAJECTORY_KINDS else TRAJECTORY_KINDS)
    tf = cfg.protocol.t_final_s
    out = _out_dir(cfg)
    files = []
    for kind in kinds:
        spec = _spec(cfg, scenario, kind, tf)
        traj = minima_trajectory(spec, scenario.params, scenario.well, n_samples=args.samples)
        path = out / f"trajectory_{kind}.csv"
        traj.write_csv(path, scenario.params.control_unit)
        files.append(path.name)
        print(path)
    if args.gnuplot:
        control = ", ".join(f"'{f}' using 1:8 with lines" for f in files)
        position = ", ".join(f"'{f}' using 1:6 with lines" for f in files)
        gp = out / "trajectories.gp"
        gp.write_text(GNUPLOT_TEMPLATE.format(control=control, position=position), encoding="utf-8")
        print(gp)
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    scenario = build_scenario(cfg)
    spec = _spec(cfg, scenario, cfg.protocol.kind, cfg.protocol.t_final_s)
    out = _out_dir(cfg)
    pcfg = None
    if spec.kind is not ProtocolKind.SUDDEN:
        pcfg = _prop_config(cfg, scenario, spec.t_final, args.snapshots)
    try:
        metrics = run_protocol(scenario, spec, pcfg)
    except PropagationError as exc:
        partial = getattr(exc, "partial", None)
        if args.snapshots and partial is not None and partial.density_snapshots is not None:
            write_density_csv(out / "density.csv", partial, scenario.scale, scenario.grid.x)
        raise
    data = {"config": cfg.to_dict(), "scenario": scenario.describe(), "metrics": metrics.as_dict()}
    _dump_json(data, out / "metrics.json")
    if args.snapshots and pcfg is not None:
        # run_protocol does not keep the history; rerun for the snapshots
        _, result = simulate(scenario, spec, pcfg)
        write_density_csv(out / "density.csv", result, scenario.scale, scenario.grid.x)
    print(f"fidelity             {metrics.fidelity:.10f}")
    print(f"excitation energy    {metrics.excitation_energy:.6e} J ({metrics.excitation_energy_hbar_omega:.6e} hbar Omega0)")
    print(f"sudden reference     {metrics.sudden_fidelity_reference:.6f}")
    print(f"ratio R              {metrics.ratio_R:.6f}")
    return EXIT_OK


SWEEP_COLUMNS = ["protocol", "t_f_s", "fidelity", "excitation_energy_J", "excitation_energy_hbar_omega", "error"]


def cmd_sweep(args, cfg: RunConfig) -> int:
    scenario = build_scenario(cfg)
    if args.tf_list:
        tfs = args.tf_list
    elif args.tf_min is not None and args.tf_max is not None:
        tfs = np.linspace(args.tf_min, args.tf_max, args.tf_points).tolist()
    else:
        # default: 0.1 T to 5 T
        tfs = np.linspace(0.1, 5.0, args.tf_points).tolist()
        tfs = [t * scenario.period for t in tfs]
    kinds = args.protocol or ["polynomial", "faquad", "compensated"]

    def factory(sc, tf):
        return _prop_config(cfg, sc, tf, False)

    cells = sweep_tf(scenario, kinds, tfs, config_factory=factory, workers=args.workers)
    out = _out_dir(cfg)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for c in cells:
            m = c.metrics
            if m is None:
                w.writerow([c.kind, repr(c.t_final), "", "", "", c.error])
            else:
                w.writerow(
                    [
                        c.kind,
                        repr(c.t_final),
                        repr(m.fidelity),
                        repr(m.excitation_energy),
                        repr(m.excitation_energy_hbar_omega),
                        "",
                    ]
                )
    ok = [c for c in cells if c.metrics is not None]
    summary = {
        "scenario": scenario.describe(),
        "period_s": scenario.period,
        "validity": validity_report(scenario.params, abs(_endpoints(cfg, scenario)[0])).as_dict(),
        "cells": len(cells),
        "succeeded": len(ok),
        "failed": len(cells) - len(ok),
        "best": {},
    }
    for kind in kinds:
        runs = [c for c in ok if c.kind == kind]
        if runs:
            best = max(runs, key=lambda c: c.metrics.fidelity)
            summary["best"][kind] = {"t_f_s": best.t_final, "fidelity": best.metrics.fidelity}
    _dump_json(summary, out / "summary.json")
    print(out / "sweep.csv")
    print(f"{len(ok)}/{len(cells)} cells succeeded")
    return EXIT_OK if ok else EXIT_PROPAGATION


def cmd_eig(args, cfg: RunConfig) -> int:
    scenario = build_scenario(cfg)
    lam = scenario.lambda0 if args.control is None else args.control
    params = scenario.params.with_control(lam)
    k = min(args.states, scenario.grid.n_points // 4)
    sol = solve_stationary(scenario.potential(lam), scenario.grid, k=k, method=args.method)
    barrier = scenario.to_internal_x(stationary_points(params)[1])
    labels = classify_wells(sol, barrier)
    # ion energies are relative to V at the window centre
    energies = scenario.scale.to_physical(sol.energies, "energy")
    out = _out_dir(cfg)
    path = out / "eigenspectrum.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "energy_J", "side", "mass_fraction"])
        for n, (e, lab) in enumerate(zip(energies.tolist(), labels)):
            w.writerow([n, repr(e), lab.side, repr(float(lab.mass_fraction))])
    hw = CONSTANTS.hbar * scenario.omega_ref
    for n, (e, lab) in enumerate(zip(energies.tolist(), labels)):
        print(f"{n:3d}  {e / hw:12.6f} hbar Omega0  {lab.side:5s}  {lab.mass_fraction:.4f}")
    print(path)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "design": cmd_design,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "eig": cmd_eig,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"biasflip: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except (NotDoubleWell, ValidityViolation) as exc:
        print(f"biasflip: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonPositiveDuration as exc:
        parser.error(str(exc))
    except PropagationError as exc:
        print(f"biasflip: propagation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROPAGATION
    except BiasflipError as exc:
        print(f"biasflip: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # bad numbers such as a non-ascending t_f grid
        parser.error(str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
