"""``tlroa`` command line: fit, simulate, tlroa, cct, roa-grid.

Exit codes: 0 success, 1 computation failure, 2 input or validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, sha256_of
from .errors import BoundaryMismatch, ComputationError, InputError, RefinementDepthExceeded
from .integrate import build_schedule, integrate_forward
from .manifest import RunManifest, file_sha256
from .model import RomState
from .network import fit_impedance, read_scan_csv
from .roa import (LyapunovSeed, TlroaBoundary, auto_seed, brute_force_roa, compute_tlroa, critical_clearing_time,
                  dump_json, equilibrium_of, read_boundary_csv)

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2


def _out_dir(args, cfg: ScenarioConfig | None) -> Path:
    out = Path(args.out) if args.out else Path(cfg.data["output"]["dir"] if cfg else "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ScenarioConfig:
    if not args.config:
        raise InputError("--config is required for this command")
    return ScenarioConfig.load(args.config)


# --- commands ------------------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = ScenarioConfig.load(args.config) if args.config else None
    if args.scan:
        scan_path = Path(args.scan)
    elif cfg is not None and "scan_file" in cfg.data["grid"]:
        scan_path = cfg.scan_path()
    else:
        raise InputError("fit needs --scan or a config whose grid source is a scan file")
    g = cfg.data["grid"] if cfg else {}
    f_nom = args.f_nominal if args.f_nominal is not None else g.get("f_nominal_hz", 50.0)
    half = args.half_window if args.half_window is not None else g.get("half_window_hz", 5.0)
    if not scan_path.is_file():
        raise InputError(f"scan file {scan_path} does not exist")
    scan = read_scan_csv(scan_path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_impedance(scan, f_nom, half)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out = _out_dir(args, cfg)
    chash = cfg.config_hash() if cfg else sha256_of({"scan": file_sha256(scan_path), "f": f_nom, "hw": half})
    man = RunManifest("fit", chash, __version__)
    report = out / "fit.json"
    report.write_text(fit.to_json() + "\n")
    man.add(report)

    lo, hi = fit.window
    mask = (scan.freqs >= lo) & (scan.freqs <= hi)
    intercept = -fit.slope_m * fit.f_corner
    plot = out / "fit_window.csv"
    with plot.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("f_hz", "im_ohm", "fit_im_ohm"))
        for f, z in zip(scan.freqs[mask], scan.z[mask]):
            w.writerow((repr(float(f)), repr(float(z.imag)), repr(float(intercept + fit.slope_m * f))))
    man.add(plot)
    man.write(out)
    print(f"r_lg = {fit.r_Lg:.6e} ohm, L_g = {fit.L_g:.6e} H ({fit.n_points} points)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    system = cfg.system()
    op = cfg.operating_point()
    t_end = cfg.t_end()
    events, sched = build_schedule(cfg.fault(), cfg.ramp_rate(), op, system.grid, 0.0, t_end)
    eq = equilibrium_of(system, cfg.post_fault_segment())
    traj = integrate_forward(system, sched, eq.state, 0.0, t_end, cfg.solver(), events)

    out = _out_dir(args, cfg)
    man = RunManifest("simulate", cfg.config_hash(), __version__)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    man.add(path)
    ev = out / "events.json"
    dump_json([{"time_s": e.time, "kind": e.kind.value} for e in events.events], ev)
    man.add(ev)
    man.write(out)
    print(f"{len(traj.t)} samples over [0, {t_end}] s, final x1 = {traj.final.x1:.6f} rad")
    return EXIT_OK


def _boundary_sidecar(boundary: TlroaBoundary, cfg: ScenarioConfig) -> dict:
    side = boundary.sidecar()
    side["regime_hash"] = cfg.regime_hash()
    return side


def cmd_tlroa(args) -> int:
    cfg = _load(args)
    settings = cfg.roa()
    horizon = settings.horizon if args.horizon is None else args.horizon
    eq = equilibrium_of(cfg.system(), cfg.post_fault_segment())
    seed = auto_seed(eq, settings)
    out = _out_dir(args, cfg)
    man = RunManifest("tlroa", cfg.config_hash(), __version__)
    try:
        boundary = compute_tlroa(seed, eq, horizon, settings)
    except RefinementDepthExceeded as exc:
        if exc.partial is not None:
            part = out / "boundary_partial.csv"
            exc.partial.to_csv(part)
            man.add(part)
            side = out / "boundary_partial.json"
            dump_json(_boundary_sidecar(exc.partial, cfg), side)
            man.add(side)
            man.write(out)
        raise
    path = out / "boundary.csv"
    boundary.to_csv(path)
    man.add(path)
    side = out / "boundary.json"
    dump_json(_boundary_sidecar(boundary, cfg), side)
    man.add(side)
    man.write(out)
    st = boundary.stats
    print(f"{st['n_vertices']} vertices, area {st['area']:.6g}, equilibrium x1 = {eq.state.x1:.6f} rad")
    return EXIT_OK


def load_boundary(path, cfg: ScenarioConfig) -> TlroaBoundary:
    """Rebuild a boundary from its CSV and sidecar, refusing one from a different regime."""
    path = Path(path)
    side_path = path.with_suffix(".json")
    if not path.is_file() or not side_path.is_file():
        raise InputError(f"boundary {path} or its sidecar {side_path.name} is missing")
    side = json.loads(side_path.read_text())
    if side.get("regime_hash") != cfg.regime_hash():
        raise BoundaryMismatch(f"boundary {path} was computed for a different post-fault regime")
    verts = read_boundary_csv(path)
    e = side["equilibrium"]
    eq = equilibrium_of(cfg.system(), cfg.post_fault_segment(), RomState(e["x1_rad"], e["x3_rad_per_s"]))
    s = side["seed_settings"]
    n = int(s["n_points"])
    angles = 2.0 * np.pi * np.arange(n) / n
    P = np.array(s["P"])
    seed = LyapunovSeed(P, np.array(s["Q"]), float(s["level_c"]), eq.x, angles, np.empty((0, 2)))
    return TlroaBoundary(verts, float(side["horizon_s"]), eq, seed, None, side.get("refinement_stats", {}))


def cmd_cct(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    bpath = Path(args.boundary) if args.boundary else out / "boundary.csv"
    boundary = load_boundary(bpath, cfg)
    c = cfg.data["cct"]
    res = critical_clearing_time(cfg.system(), cfg.operating_point(), cfg.fault(0.0, c["window_s"]), boundary,
                                 c["window_s"], c["resolution_s"])
    man = RunManifest("cct", cfg.config_hash(), __version__)
    path = out / "cct.json"
    dump_json(res.to_json_dict(), path)
    man.add(path)
    man.write(out)
    print("CCT: never exits within the window" if res.never_exits else f"CCT = {res.cct_s:.3f} s")
    return EXIT_OK


def cmd_roa_grid(args) -> int:
    cfg = _load(args)
    settings = cfg.roa()
    eq = equilibrium_of(cfg.system(), cfg.post_fault_segment())
    if args.box is None:
        e = eq.x
        box = (e[0] - 1.0, e[0] + 1.0, e[1] - 2.0, e[1] + 2.0)
    else:
        box = tuple(args.box)
    nx, ny = args.resolution
    horizon = settings.conv_horizon if args.horizon is None else args.horizon
    grid = brute_force_roa(eq, box, (nx, ny), horizon, settings, args.workers)
    out = _out_dir(args, cfg)
    man = RunManifest("roa-grid", cfg.config_hash(), __version__)
    path = out / "oracle_grid.csv"
    grid.to_csv(path)
    man.add(path)
    man.write(out)
    print(f"{int(grid.converged.sum())}/{grid.converged.size} grid points converge")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tlroa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file, or builtin:case1 / builtin:case2")
    common.add_argument("--out", help="output directory (default: the config's output.dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a series R-L to an impedance scan")
    p.add_argument("--scan", help="scan CSV with header f_hz,re_ohm,im_ohm")
    p.add_argument("--f-nominal", type=float, default=None, help="window centre in Hz (default 50)")
    p.add_argument("--half-window", type=float, default=None, help="window half-width in Hz (default 5)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="simulate the configured fault scenario")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tlroa", parents=[common], help="compute the time-limited stability boundary")
    p.add_argument("--horizon", type=float, default=None, help="reverse-time horizon in s")
    p.set_defaults(func=cmd_tlroa)

    p = sub.add_parser("cct", parents=[common], help="critical clearing time against a boundary")
    p.add_argument("--boundary", help="boundary CSV (sidecar JSON alongside); default <out>/boundary.csv")
    p.set_defaults(func=cmd_cct)

    p = sub.add_parser("roa-grid", parents=[common], help="label a state grid by forward simulation")
    p.add_argument("--box", type=float, nargs=4, metavar=("X1_LO", "X1_HI", "X3_LO", "X3_HI"))
    p.add_argument("--resolution", type=int, nargs=2, metavar=("NX", "NY"), default=(41, 41))
    p.add_argument("--horizon", type=float, default=None, help="forward simulation limit in s")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_roa_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
