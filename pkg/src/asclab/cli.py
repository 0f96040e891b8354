"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 numerical fault.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as ascio
from .config import (
    ExperimentConfig,
    build_forcing,
    build_grid,
    build_params,
    build_symbol,
    build_theta0,
    default_threads,
    load_config,
    run_kwargs,
)
from .diagnostics import linf_decay_check, lp_bound_check, write_record_csv
from .dynamics import ModelParams, ForcingSpec, SimulationState, exact_linear_solution, run, save_checkpoint
from .errors import ConfigError, NumericalFault
from .harness import (
    attractor_lambda_sweep,
    sweep_kappa,
    sweep_kappa_convergence,
    sweep_lambda,
)
from .profiles import random_smooth_field
from .spectral import Grid
from .symbols import MGSymbol, SQGSymbol, audit_assumptions


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="asclab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_cmd(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and exit")
        sp.add_argument("--workers", type=int, default=None, help="worker threads for sweeps")
        return sp

    add_config_cmd("run", "integrate one configuration and write diagnostics")
    add_config_cmd("sweep-kappa", "dissipation-rate sweep over decreasing kappa")
    add_config_cmd("sweep-lambda", "solution convergence as lambda -> 0")
    add_config_cmd("sweep-kappa-conv", "solution convergence as kappa -> 0")
    at = add_config_cmd("attractor", "attractor sampling and semi-distance table")
    at.add_argument("--ics", type=int, default=8, help="number of random initial conditions")
    at.add_argument("--samples-per-ic", type=int, default=1)
    at.add_argument("--spinup", type=float, default=100.0)
    at.add_argument("--gap", type=float, default=10.0)
    at.add_argument("--seed0", type=int, default=1000)

    vs = sub.add_parser("verify-symbol", help="audit the constitutive assumptions of a symbol")
    vs.add_argument("--model", required=True, choices=["sqg", "mg", "custom"])
    vs.add_argument("--nu", type=float, default=1.0)
    vs.add_argument("--kmax", type=int, default=16)
    vs.add_argument("--table", help="symbol table file (custom model)")
    vs.add_argument("--write-table", help="also write the symbol table to this path")
    vs.add_argument("--n", type=int, default=32, help="grid size when writing a table")

    lo = sub.add_parser("linear-oracle", help="stepped linear run vs the closed-form solution")
    lo.add_argument("--gamma", type=float, required=True)
    lo.add_argument("--kappa", type=float, required=True)
    lo.add_argument("--lambda", dest="lam", type=float, default=0.0)
    lo.add_argument("--dim", type=int, default=2, choices=[2, 3])
    lo.add_argument("--n", type=int, default=32)
    lo.add_argument("--t-end", type=float, default=1.0)
    lo.add_argument("--dt", type=float, default=0.05)

    rp = sub.add_parser("report", help="summarize an output directory and render figures")
    rp.add_argument("--dir", required=True)
    return p


def _cmd_run(cfg: ExperimentConfig, outdir: Path) -> int:
    grid = build_grid(cfg)
    sym = build_symbol(cfg)
    params = build_params(cfg, sym)
    forcing = build_forcing(cfg, grid, sym)
    theta0 = build_theta0(cfg, grid, sym)

    holder = {}

    def keep_final(state):
        holder["state"] = state

    rec = run(
        params, theta0, forcing, cfg["time"]["t_end"], cfg["time"]["dt"],
        observers=[keep_final], **run_kwargs(cfg),
    )

    margins = {}
    if params.lam > 0:
        margins["lp2_margin"] = lp_bound_check(rec, params, forcing, 2.0).margin
        margins["lpinf_margin"] = lp_bound_check(rec, params, forcing, float("inf")).margin
    decay, uniform = linf_decay_check(rec, params, forcing, c0=cfg["observers"]["c0"])
    if decay is not None:
        margins["linf_decay_margin"] = decay.margin
    margins["linf_uniform_margin"] = uniform.margin

    outdir.mkdir(parents=True, exist_ok=True)
    write_record_csv(outdir / "run.csv", rec, margins)
    final_state = holder["state"]
    ascio.write_field(outdir / "theta_final.ascl", final_state.theta)
    save_checkpoint(
        outdir / "run.ckpt", final_state,
        nonlinear=cfg["model"]["nonlinear"], c_cfl=cfg["time"]["c_cfl"],
    )
    print(f"run complete: {len(rec)} samples to t={rec.times[-1]}")
    print(f"wrote {outdir / 'run.csv'}")
    for note in rec.annotations:
        print(f"note: {note}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "verify-symbol":
        if args.model == "sqg":
            sym = SQGSymbol()
        elif args.model == "mg":
            sym = MGSymbol(args.nu)
        else:
            if not args.table:
                raise ConfigError("custom model requires --table")
            sym = ascio.read_symbol_table(args.table)
        rep = audit_assumptions(sym, args.kmax)
        print(rep.summary())
        if args.write_table:
            grid = Grid.of(sym.dim, args.n)
            ascio.write_symbol_table(args.write_table, sym, grid)
            print(f"wrote symbol table {args.write_table}")
        return 0

    if cmd == "linear-oracle":
        dim, n = args.dim, args.n
        grid = Grid.of(dim, n)
        sym = SQGSymbol() if dim == 2 else MGSymbol(1.0)
        params = ModelParams(lam=args.lam, kappa=args.kappa, gamma=args.gamma, sym=sym)
        from .profiles import named_field

        forcing = ForcingSpec(named_field(grid, "cos_x1" if dim == 2 else "cos_x1_cos_x3"), sym)
        theta0 = random_smooth_field(grid, seed=7, forced_zero=~sym.state_keep_mask(grid))
        rec = run(params, theta0, forcing, args.t_end, args.dt, nonlinear=False,
                  stride=max(1, int(round(args.t_end / args.dt)) // 8), capture_fields=True)
        worst = 0.0
        for t, fld in zip(rec.times, rec.fields):
            exact = exact_linear_solution(theta0, forcing, params, t)
            scale = float(np.max(np.abs(exact.coeffs)))
            dev = float(np.max(np.abs(fld.coeffs - exact.coeffs))) / max(scale, 1e-300)
            worst = max(worst, dev)
        print(f"max modewise deviation vs exact linear solution: {worst:.3e}")
        if worst <= 1e-10:
            return 0
        print("deviation exceeds 1e-10", file=sys.stderr)
        return 2

    if cmd == "report":
        from .report import generate_report

        outdir = Path(args.dir)
        if not outdir.is_dir():
            raise ConfigError(f"not a directory: {outdir}")
        path = generate_report(outdir)
        print(path.read_text())
        print(f"wrote {path}")
        return 0

    # config-driven commands
    cfg = load_config(args.config)
    if args.dry_run:
        print(f"config ok, fingerprint {cfg.fingerprint()}")
        return 0
    outdir = cfg.output_dir()
    outdir.mkdir(parents=True, exist_ok=True)
    workers = args.workers if args.workers is not None else default_threads()

    if cmd == "run":
        return _cmd_run(cfg, outdir)
    if cmd == "sweep-kappa":
        res = sweep_kappa(cfg, workers=workers)
        res.to_csv(outdir / "sweep_kappa.csv")
        print(f"wrote {outdir / 'sweep_kappa.csv'}")
        for r in res.rows:
            note = f"  [{r.error}]" if r.error else ""
            print(f"kappa={r.kappa:g}  eps_T={r.eps_T:.6e}  tail_max={r.eps_tail_max:.6e}{note}")
        if res.fit:
            print(f"log-log fit slope {res.fit.slope:.3f} (r^2={res.fit.r_squared:.4f})")
        print(f"strictly decreasing: {res.strictly_decreasing}")
        return 0
    if cmd == "sweep-lambda":
        res = sweep_lambda(cfg, workers=workers)
        res.to_csv(outdir / "sweep_lambda.csv")
        print(f"wrote {outdir / 'sweep_lambda.csv'}")
        return 0
    if cmd == "sweep-kappa-conv":
        res = sweep_kappa_convergence(cfg, workers=workers)
        res.to_csv(outdir / "sweep_kappa_conv.csv")
        print(f"wrote {outdir / 'sweep_kappa_conv.csv'}")
        return 0
    if cmd == "attractor":
        res = attractor_lambda_sweep(
            cfg, n_ics=args.ics, samples_per_ic=args.samples_per_ic,
            t_spinup=args.spinup, t_gap=args.gap, seed0=args.seed0,
            workers=workers, outdir=outdir,
        )
        res.to_csv(outdir / "attractor_distances.csv")
        print(f"wrote {outdir / 'attractor_distances.csv'}")
        for lam, dist, _ in res.rows:
            print(f"lambda={lam:g}  H1 semi-distance={dist:.6e}")
        return 0
    raise ConfigError(f"unknown command {cmd!r}")


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
