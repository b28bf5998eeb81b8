"""Command line interface.

Subcommands:
  simulate <spec.json>                     run one experiment, write results.csv
  sweep <spec.json> --param P --values V   run a parameter sweep, write
                                           results.csv + plot.svg
  reconstruct --A a.csv --y y.csv --p P --q Q [estimator flags]
                                           fit a single problem, write xhat.csv

Exit codes: 0 success, 2 bad specification or arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import nuclear_min
from .estimator import EstimatorConfig, fit
from .harness import (
    SpecError,
    load_spec,
    run_experiment,
    sweep,
    write_plot_svg,
    write_results_csv,
)
from .linalg import NumericalError, load_matrix_csv, save_matrix_csv
from .penalties import LogDetPenalty, SchattenPenalty

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_NUMERICAL = 3


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--t1", type=int, default=None, help="override inner trial count")
    parser.add_argument("--t2", type=int, default=None, help="override outer trial count")
    parser.add_argument(
        "--timing", action="store_true",
        help="record wall time in results.csv (breaks byte reproducibility)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsvm",
        description="Bayesian low-rank matrix reconstruction and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one Monte-Carlo experiment")
    sim.add_argument("spec", type=Path, help="experiment spec JSON")
    _add_common(sim)

    swp = sub.add_parser("sweep", help="run an experiment over a parameter grid")
    swp.add_argument("spec", type=Path)
    swp.add_argument("--param", required=True, choices=("m_ratio", "smnr_db", "q"))
    swp.add_argument(
        "--values", required=True, help="comma-separated parameter values"
    )
    _add_common(swp)

    rec = sub.add_parser("reconstruct", help="fit one problem from CSV inputs")
    rec.add_argument("--A", dest="a_path", required=True, type=Path)
    rec.add_argument("--y", dest="y_path", required=True, type=Path)
    rec.add_argument("--p", required=True, type=int)
    rec.add_argument("--q", required=True, type=int)
    rec.add_argument(
        "--penalty", choices=("schatten", "logdet", "nuclear"), default="schatten"
    )
    rec.add_argument("--sided", choices=("left", "right", "two"), default="two")
    rec.add_argument("--s", type=float, default=0.5, help="Schatten exponent")
    rec.add_argument("--epsilon", type=float, default=1e-6)
    rec.add_argument("--nu", type=float, default=None, help="log-det weight")
    rec.add_argument("--noise-rule", choices=("trace", "gamma"), default="trace")
    rec.add_argument("--no-balancing", action="store_true")
    rec.add_argument("--max-iters", type=int, default=200)
    rec.add_argument("--tol", type=float, default=1e-6)
    rec.add_argument(
        "--eps-ball", type=float, default=None,
        help="residual ball radius (nuclear penalty only)",
    )
    rec.add_argument("--out-dir", type=Path, default=Path("."))
    return parser


def _apply_overrides(spec, args):
    if args.seed is not None:
        spec = replace(spec, master_seed=args.seed)
    if args.t1 is not None:
        spec = replace(spec, t1=args.t1)
    if args.t2 is not None:
        spec = replace(spec, t2=args.t2)
    if args.timing:
        spec = replace(spec, timing=True)
    return spec


def _cmd_simulate(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    result = run_experiment(spec, threads=args.threads)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "results.csv"
    write_results_csv(out, result)
    for est in result.estimators:
        print(f"{est.name}: nmse={est.nmse:.6g} stderr={est.stderr:.3g} "
              f"trials={est.trials} excluded={est.excluded}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as e:
        raise SpecError(f"bad --values: {e}") from e
    if args.param == "q":
        values = [int(v) for v in values]
    results = sweep(spec, args.param, values, threads=args.threads)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = args.out_dir / "results.csv"
    svg_path = args.out_dir / "plot.svg"
    write_results_csv(csv_path, results, parameter=args.param, values=values)
    write_plot_svg(svg_path, results, args.param, values)
    for value, result in zip(values, results):
        line = " ".join(f"{e.name}={e.nmse:.4g}" for e in result.estimators)
        print(f"{args.param}={value}: {line}")
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    a = load_matrix_csv(args.a_path)
    y_mat = load_matrix_csv(args.y_path)
    y = y_mat.ravel()
    if a.shape[1] != args.p * args.q:
        raise SpecError(
            f"A has {a.shape[1]} columns, expected p*q = {args.p * args.q}"
        )
    if a.shape[0] != y.size:
        raise SpecError(f"A has {a.shape[0]} rows but y has {y.size} entries")

    if args.penalty == "nuclear":
        if args.eps_ball is None:
            raise SpecError("--eps-ball is required with --penalty nuclear")
        res = nuclear_min(a, y, args.p, args.q, args.eps_ball)
        x_hat = res.x_hat
        print(f"nuclear fit: lambda={res.lam:.6g} residual={res.residual:.6g} "
              f"iters={res.n_iters} bracketed={res.bracketed}")
    else:
        if args.penalty == "schatten":
            penalty = SchattenPenalty(s=args.s, epsilon=args.epsilon)
        else:
            penalty = LogDetPenalty(nu=args.nu, epsilon=args.epsilon)
        try:
            config = EstimatorConfig(
                penalty=penalty,
                sided=args.sided,
                noise_rule=args.noise_rule,
                balancing=not args.no_balancing,
                max_iters=args.max_iters,
                tol=args.tol,
            )
        except ValueError as e:
            raise SpecError(str(e)) from e
        result = fit(a, y, args.p, args.q, config)
        x_hat = result.x_hat
        sv = result.state.singular_values()
        resid = float(np.linalg.norm(y - a @ x_hat.flatten(order="F")))
        print(f"iterations={result.trace.n_iters} converged={result.trace.converged} "
              f"beta={result.state.beta:.6g} residual={resid:.6g}")
        print("singular values:", " ".join(f"{v:.4g}" for v in sv))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "xhat.csv"
    save_matrix_csv(out, x_hat)
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_reconstruct(args)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
