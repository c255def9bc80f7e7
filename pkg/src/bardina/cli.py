"""Command line entry point: ``bardina {filter-verify,solve,picard,kernel-table}``.

Exit codes: 0 success, 1 suite or solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fields, io
from .config import ConfigError, RunConfig, load_config
from .fields import Grid
from .filter import kernel_table
from .initial import make_initial
from .picard import (PicardDivergence, calibrate_cpic, global_extension, tau_lip, tau_max,
                     trajectory_from_extension)
from .solver import (InstabilityError, SolverParams, check_energy_bounds, energy_alpha, energy_audit,
                     filtered_initial, integrate)
from .suites import SUITES, run_suites

log = logging.getLogger("bardina")


def _setup(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.initial_data.seed = args.seed
    if getattr(args, "out", None):
        cfg.output.dir = args.out
    return cfg.validate()


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    return out


def _initial(cfg: RunConfig):
    grid = Grid(cfg.grid.N, cfg.grid.L)
    d = cfg.initial_data
    u0 = make_initial(grid, d.kind, d.seed, d.spectrum_slope, d.amplitude)
    return grid, u0, filtered_initial(grid, u0, cfg.physics.alpha)


def cmd_filter_verify(args) -> int:
    if args.list:
        print("\n".join(SUITES))
        return 0
    cfg = _setup(args)
    results = run_suites(cfg, args.suite or None)
    for res in results:
        status = "PASS" if res.ok else "FAIL"
        print(f"{status} {res.name:18s} {res.passed}/{res.run} worst_slack={res.worst_slack:.3e} "
              f"time={res.wall_time:.2f}s")
    if args.out:
        out = _outdir(cfg)
        io.write_jsonl(out / "reports.jsonl", [r for res in results for r in res.reports], io.REPORT_SCHEMA)
        io.write_json(out / "suites.json", {"suites": [r.summary() for r in results]}, io.REPORT_SCHEMA)
    return 0 if all(r.ok for r in results) else 1


def _write_trajectory(out: Path, traj, ledger) -> None:
    samples = []
    lookup = {round(t, 12): i for i, t in enumerate(ledger.t)}
    for n, state in enumerate(traj.snapshots):
        name = f"snap_{n:05d}.bin"
        io.write_snapshot(out / name, traj.grid, state.u)
        i = lookup.get(round(state.t, 12), len(ledger.t) - 1)
        samples.append({"t": state.t, "E_alpha": float(ledger.E_alpha[i]),
                        "residual": float(ledger.residual[i]), "file": name})
    io.write_json(out / "index.json", {"samples": samples}, io.INDEX_SCHEMA)
    io.write_csv(out / "ledger.csv", ledger.HEADER, ledger.rows(), io.LEDGER_SCHEMA)


def cmd_solve(args) -> int:
    cfg = _setup(args)
    grid, u0, ui = _initial(cfg)
    ph, it = cfg.physics, cfg.integrator
    params = SolverParams(ph.nu, ph.alpha, it.dt, it.t_end)
    try:
        if it.mode == "if-rk4":
            traj = integrate(grid, ui, params, cfg.output.sample_every)
        else:
            if it.t_end == 0:
                traj = integrate(grid, ui, params)
            else:
                ext = global_extension(grid, ui, ph.nu, ph.alpha, cfg.picard.C_pic, it.t_end,
                                       n_max=it.n_max, tol=it.tol, panels=it.panels)
                traj = trajectory_from_extension(grid, ext, params)
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return 1
    except PicardDivergence as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 1
    ledger = energy_audit(traj)
    bounds = check_energy_bounds(ledger, grid, u0)
    _write_trajectory(_outdir(cfg), traj, ledger)
    print(f"t_final={ledger.t[-1]:.6g} E_alpha0={ledger.E0:.10g} E_alpha={ledger.E_alpha[-1]:.10g}")
    print(f"max |residual|/E0={ledger.max_residual() / max(ledger.E0, 1e-300):.3e} "
          f"final residual={ledger.residual[-1]:.3e}")
    print(f"monotone={bounds.monotone} (max increase {bounds.max_increase:.3e}); "
          f"E0 <= 5||u0||^2: {bounds.E0 <= bounds.bound}")
    print("gauge: k=0 mode passed through by the projector, pressure has zero mean")
    return 0


def cmd_picard(args) -> int:
    cfg = _setup(args)
    grid, u0, ui = _initial(cfg)
    ph, it, pc = cfg.physics, cfg.integrator, cfg.picard
    out = _outdir(cfg)
    kw = dict(n_max=it.n_max, tol=it.tol, panels=it.panels)
    E0 = energy_alpha(grid, ui, ph.alpha)
    if args.sweep_cpic:
        if E0 == 0:
            print("zero initial data: nothing to calibrate", file=sys.stderr)
            return 1
        best, table = calibrate_cpic(grid, ui, ph.nu, ph.alpha, **kw)
        for C, ratio in table:
            print(f"C_pic={C:.6e} max_ratio={ratio:.4f}")
        print(f"calibrated C_pic={best:.6e}")
        io.write_csv(out / "cpic_sweep.csv", ["C_pic", "max_ratio"], table, io.PICARD_SCHEMA)
        return 0
    horizon = math.inf if E0 > 0 else (it.t_end or 1.0)
    try:
        ext = global_extension(grid, ui, ph.nu, ph.alpha, pc.C_pic, horizon, max_segments=pc.segments, **kw)
    except PicardDivergence as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 1
    report = {
        "C_pic": pc.C_pic,
        "E_alpha0": E0,
        "tau_max": tau_max(E0, ph.nu, ph.alpha, pc.C_pic) if E0 > 0 else None,
        "tau_lip": tau_lip(E0, ph.nu, ph.alpha, pc.C_pic) if E0 > 0 else None,
        "T_n": [0.0] + ext.T,
        "E_alpha_n": ext.E,
        "segments": [
            {"T_start": s.T_start, "tau": s.tau, "E_alpha": s.E_start, "status": s.run.status,
             "iterations": s.run.n_iterations, "d": s.run.d, "ratios": s.run.ratios,
             "max_iterate_energy": s.run.max_energy()}
            for s in ext.segments
        ],
    }
    report["ratios"] = [r for s in report["segments"] for r in s["ratios"]]
    io.write_json(out / "picard.json", report, io.PICARD_SCHEMA)
    for n, s in enumerate(ext.segments):
        print(f"segment {n}: T=[{s.T_start:.6g}, {s.T_end:.6g}] E_alpha={s.E_start:.8g} "
              f"status={s.run.status} iterations={s.run.n_iterations} max_ratio={s.run.max_ratio:.4f}")
    return 0 if all(s.run.status != "diverged" for s in ext.segments) else 1


def cmd_kernel_table(args) -> int:
    if not args.alpha > 0:
        print("alpha must be positive", file=sys.stderr)
        return 2
    if args.radii:
        radii = [float(r) for r in args.radii.split(",")]
    else:
        radii = list(np.linspace(args.r_max / args.count, args.r_max, args.count))
    rows = kernel_table(args.alpha, radii)
    header = ["r", "H_alpha", "cumulative_mass"]
    if args.out:
        io.write_csv(args.out, header, rows, io.KERNEL_SCHEMA)
    else:
        print(f"# schema: {io.KERNEL_SCHEMA}")
        print(",".join(header))
        for row in rows:
            print(",".join(repr(float(v)) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bardina", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="U64")

    p = sub.add_parser("filter-verify", help="run the Helmholtz filter property suites")
    common(p)
    p.add_argument("--list", action="store_true", help="print suite names and exit")
    p.add_argument("--suite", action="append", choices=list(SUITES), help="run only these suites")
    p.set_defaults(func=cmd_filter_verify)

    p = sub.add_parser("solve", help="integrate the model and write snapshots and the energy ledger")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("picard", help="Picard segments, step-size bounds and contraction ratios")
    common(p)
    p.add_argument("--sweep-cpic", action="store_true", help="calibrate C_pic by bisection")
    p.set_defaults(func=cmd_picard)

    p = sub.add_parser("kernel-table", help="tabulate the filter kernel and its cumulative mass")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--radii", help="comma separated radii")
    p.add_argument("--r-max", type=float, default=10.0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_kernel_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
