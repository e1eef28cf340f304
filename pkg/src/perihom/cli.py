"""Command-line driver.

Subcommands: cell (solve and store the cell bundle), solve (one eps, store
an approximant bundle), converge (eps sweep with CSV/JSON/gnuplot output),
check (property suites), kernels (tabulate smoothing kernels and their
second-moment coefficients).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .cell import cell_pipeline
from .coefficients import make_family, validate
from .errors import PerihomError
from .harness import ExperimentConfig, build_f, lambda0_diagnostic, run_check, run_converge
from .resolvents import EpsEmbedding, build_bundle
from .smoothing import GAMMA, gamma_coefficient, kernel_chi, kernel_support
from .spectral import GridSpec, set_fft_workers


def _add_common(p: argparse.ArgumentParser, config_required: bool) -> None:
    p.add_argument("--config", required=config_required, help="experiment config (JSON)")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument(
        "--no-dealias",
        action="store_true",
        help="disable 3/2-rule dealiasing of quadratic products",
    )


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_dealias:
        cfg.dealias = False
    cfg.validate()
    return cfg


def _cmd_cell(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    grid = GridSpec(cfg.dim, cfg.cell_points)
    a = make_family(cfg.family, grid)
    lam = validate(a)
    cell = cell_pipeline(a, tol=cfg.tol, dealias=cfg.dealias)
    out = Path(cfg.out_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    cell.save(out / "cell.json")
    print(f"cell problems solved on a {cfg.cell_points}^{cfg.dim} grid (lambda = {lam:.6g})")
    print(f"effective tensor eigenvalues in [{cell.a_hat.eig_bounds()[0]:.6g}, "
          f"{cell.a_hat.eig_bounds()[1]:.6g}]")
    print(f"drift magnitude max|b| = {np.max(np.abs(cell.b)):.3e}, "
          f"coupling max|c| = {np.max(np.abs(cell.c)):.3e}")
    print(f"quintic symbol diagnostic: {lambda0_diagnostic(cell, seed=cfg.seed):.3e}")
    print(f"wrote {out / 'cell.json'} (+ sidecar)")
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    n = round(1.0 / args.eps)
    if abs(args.eps * n - 1.0) > 1e-9 or n < 2:
        print(f"error: eps = {args.eps} is not the reciprocal of an integer >= 2", file=sys.stderr)
        return 2
    grid = GridSpec(cfg.dim, cfg.cell_points)
    a = make_family(cfg.family, grid)
    cell = cell_pipeline(a, tol=cfg.tol, dealias=cfg.dealias)
    emb = EpsEmbedding(n, grid)
    f = build_f(emb.torus_grid, cfg.f_modes, cfg.f_mean)
    bundle = build_bundle(a, cell, emb, f, dealias=cfg.dealias, approximants=cfg.approximants)
    out = Path(cfg.out_dir or "out")
    bundle.save(out / f"bundle_n{n}.json")
    for key, val in bundle.errors().items():
        print(f"{key} = {val:.6e}")
    print(f"oscillating solve: {bundle.cg_info.iterations} iterations "
          f"(residual {bundle.cg_info.residual:.2e})")
    print(f"wrote {out / f'bundle_n{n}.json'} (+ sidecar)")
    return 0


def _cmd_converge(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if cfg.out_dir is None:
        cfg.out_dir = "out"
    report = run_converge(cfg)
    print(report.to_csv(), end="")
    for col, fit in report.slopes.items():
        print(f"slope[{col}] = {fit['slope']:.3f} (fit rms {fit['fit_rms']:.2e})")
    print(f"lambda0_diagnostic = {report.lambda0:.3e}")
    print(f"wrote report to {cfg.out_dir}/")
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    if args.threads:
        set_fft_workers(args.threads)
    status, rows = run_check(seed=args.seed, trials=args.trials)
    print(f"{'check':<44}{'worst':>12}{'limit':>10}{'trials':>8}  result")
    for r in rows:
        print(
            f"{r.check_id:<44}{r.worst:>12.3e}{r.limit:>10.2g}{args.trials:>8}"
            f"  {'pass' if r.passed else 'FAIL'}"
        )
    print(f"overall: {'pass' if status == 0 else 'FAIL'}")
    return status


def _cmd_kernels(args: argparse.Namespace) -> int:
    print("iterated Steklov kernels chi_k and second-moment coefficients")
    print(f"{'k':>2} {'support':>9} {'gamma (quad)':>16} {'gamma (closed)':>15}")
    for k in (1, 2, 3):
        print(f"{k:>2} {kernel_support(k):>9.2f} {gamma_coefficient(k):>16.12f} {GAMMA[k]:>15.12f}")
    ss = np.linspace(-1.5, 1.5, 13)
    print("\n  s      chi_1     chi_2     chi_3")
    for s in ss:
        print(f"{s:>5.2f} {kernel_chi(1, s):>9.4f} {kernel_chi(2, s):>9.4f} {kernel_chi(3, s):>9.4f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="perihom",
        description="periodic homogenization of fourth-order operators: cell "
        "problems, correctors, and resolvent-approximation rate studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cell = sub.add_parser("cell", help="solve cell problems and store the bundle")
    _add_common(p_cell, config_required=True)
    p_cell.set_defaults(func=_cmd_cell)

    p_solve = sub.add_parser("solve", help="solve one eps and store the approximants")
    _add_common(p_solve, config_required=True)
    p_solve.add_argument("--eps", type=float, required=True, help="eps = 1/n")
    p_solve.set_defaults(func=_cmd_solve)

    p_conv = sub.add_parser("converge", help="run an eps sweep and fit slopes")
    _add_common(p_conv, config_required=True)
    p_conv.set_defaults(func=_cmd_converge)

    p_check = sub.add_parser("check", help="run the property suites")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--trials", type=int, default=50)
    p_check.add_argument("--threads", type=int, default=1)
    p_check.set_defaults(func=_cmd_check)

    p_kern = sub.add_parser("kernels", help="tabulate smoothing kernels and gammas")
    p_kern.set_defaults(func=_cmd_kernels)

    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        set_fft_workers(args.threads)
    try:
        return args.func(args)
    except PerihomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
