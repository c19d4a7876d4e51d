"""Command-line interface.

Subcommands: ``simulate`` (scenario -> dataset files + truth manifest),
``screen`` (dataset -> scores.csv + selected.csv), ``fit`` (dataset +
selected set -> beta.csv / B.csv / trace.csv, optionally cross-validated),
``permtest`` (R^2 permutation test) and ``study`` (Monte Carlo benchmark
-> report.csv + curves.csv).  Every command writes a manifest.json next to
its outputs with the resolved configuration and seeds.

Exit codes: 0 success, 2 validation or parse error, 3 numerical failure.
The ``SLRS_THREADS`` environment variable overrides ``--threads``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import StudySpec, TwoStepPipeline, coverage_study, run_study
from .exceptions import NumericalError, SlrsError, ValidationError
from .io import (
    CONFIG_SCHEMA,
    load_blocks_csv,
    load_dataset,
    load_selected_csv,
    parse_config,
    save_beta_csv,
    save_blocks_csv,
    save_curves_csv,
    save_cv_csv,
    save_dataset,
    save_manifest,
    save_matrix_csv,
    save_report_csv,
    save_scores_csv,
    save_selected_csv,
    save_trace_csv,
    save_truth,
    scenario_from_config,
)
from .metrics import permutation_test
from .screening import screen
from .simulate import make_scenario
from .solver import SolverOptions, fit
from .tuning import cross_validate, lambda_grid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _resolve_threads(args) -> int:
    env = os.environ.get("SLRS_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"SLRS_THREADS must be an integer, got {env!r}") from None
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def _solver_options(values: dict) -> SolverOptions:
    return SolverOptions(
        max_iter=int(values.get("max_iter", 5000)),
        rel_tol=float(values.get("rel_tol", 1e-6)),
    )


def cmd_simulate(args) -> int:
    values = parse_config(args.config)
    config = scenario_from_config(values)
    started = time.perf_counter()
    scenario = make_scenario(config)
    out = Path(args.output)
    save_dataset(out, scenario.data, tensor_format=args.tensor_format)
    save_truth(out / "truth.json", scenario.truth)
    outputs = ["X.csv", "Y.csv", f"Z.{args.tensor_format}", "truth.json"]
    if scenario.partition is not None:
        save_blocks_csv(out / "blocks.csv", scenario.partition)
        outputs.append("blocks.csv")
    save_manifest(out / "manifest.json", {
        "command": "simulate",
        "config": {k: v for k, v in values.items()},
        "seed": config.seed,
        "outputs": outputs,
        "wall_seconds": time.perf_counter() - started,
    })
    print(f"wrote {', '.join(outputs)} to {out}")
    return EXIT_OK


def cmd_screen(args) -> int:
    data = load_dataset(args.dataset)
    partition = load_blocks_csv(args.blocks) if args.blocks else None
    started = time.perf_counter()
    result = screen(
        data,
        method=args.method,
        target=args.target,
        ratio=args.ratio,
        partition=partition,
    )
    out = Path(args.output)
    save_scores_csv(out / "scores.csv", result)
    save_selected_csv(out / "selected.csv", result)
    save_manifest(out / "manifest.json", {
        "command": "screen",
        "dataset": str(args.dataset),
        "method": args.method,
        "target": result.target_size,
        "ratio": args.ratio,
        "k": result.k,
        "k_exposure": result.k_exposure,
        "selected_size": int(result.selected.size),
        "thresholds": result.thresholds,
        "wall_seconds": time.perf_counter() - started,
    })
    print(f"selected {result.selected.size} covariates (k={result.k}) -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_dataset(args.dataset)
    M = load_selected_csv(args.selected)
    if M.size and M.max() >= data.s:
        raise ValidationError("selected indices exceed the covariate count")
    options = SolverOptions(max_iter=args.max_iter, rel_tol=args.rel_tol, record_trace=True)
    started = time.perf_counter()
    out = Path(args.output)
    cv_info = None
    if args.cv:
        grid = lambda_grid(data, M, args.grid_n1, args.grid_n2)
        table = cross_validate(data, M, grid, folds=args.folds, seed=args.cv_seed,
                               options=SolverOptions(max_iter=args.max_iter,
                                                     rel_tol=args.rel_tol))
        lam1, lam2 = table.grid[table.chosen]
        save_cv_csv(out / "cv.csv", table)
        cv_info = {"folds": args.folds, "seed": args.cv_seed,
                   "chosen": [lam1, lam2], "grid_size": len(table.grid)}
    else:
        if args.lambda1 is None or args.lambda2 is None:
            raise ValidationError("either pass --lambda1 and --lambda2 or use --cv")
        lam1, lam2 = args.lambda1, args.lambda2
    result = fit(data, M, lam1, lam2, options)
    save_beta_csv(out / "beta.csv", result.beta, result.indices)
    save_matrix_csv(out / "B.csv", result.B, prefix="b")
    save_trace_csv(out / "trace.csv", result.objective_trace)
    save_manifest(out / "manifest.json", {
        "command": "fit",
        "dataset": str(args.dataset),
        "selected": str(args.selected),
        "lambda1": result.lambda1,
        "lambda2": result.lambda2,
        "cv": cv_info,
        "iterations": result.iterations,
        "converged": result.converged,
        "objective": result.objective,
        "step_size": result.step_size,
        "wall_seconds": time.perf_counter() - started,
    })
    status = "converged" if result.converged else "NOT converged"
    print(f"fit {status} in {result.iterations} iterations, objective {result.objective:.6g}")
    return EXIT_OK


def cmd_permtest(args) -> int:
    data = load_dataset(args.dataset)
    pipeline = TwoStepPipeline(
        target=args.target,
        grid_n1=args.grid_n1,
        grid_n2=args.grid_n2,
        folds=args.folds,
        seed=args.cv_seed,
        options=SolverOptions(max_iter=args.max_iter, rel_tol=args.rel_tol),
    )
    if args.fast_fit:
        pipeline = pipeline.with_fixed_set(data)
    started = time.perf_counter()
    result = permutation_test(data, pipeline, n_perm=args.n_perm, seed=args.seed,
                              n_jobs=_resolve_threads(args))
    out = Path(args.output)
    save_manifest(out / "permtest.json", {
        "command": "permtest",
        "dataset": str(args.dataset),
        "r2": result.observed_r2,
        "p_value": result.p_value,
        "n_perm": args.n_perm,
        "seed": args.seed,
        "fast_fit": bool(args.fast_fit),
        "null_r2": result.null_r2.tolist(),
        "wall_seconds": time.perf_counter() - started,
    })
    print(f"R^2 = {result.observed_r2:.6g}, p-value = {result.p_value:.6g} "
          f"({args.n_perm} permutations)")
    return EXIT_OK


def cmd_study(args) -> int:
    values = parse_config(args.config)
    scenario = scenario_from_config(values)
    methods = values.get("methods", ["joint:proposed"])
    if isinstance(methods, str):
        methods = [methods]
    spec = StudySpec(
        scenario=scenario,
        methods=tuple(methods),
        replicates=int(values.get("replicates", 20)),
        base_seed=int(values.get("base_seed", 0)),
        target=int(values["target"]) if values.get("target") else None,
        ratio=float(values.get("ratio", 1.0)),
        grid_n1=int(values.get("grid_n1", 10)),
        grid_n2=int(values.get("grid_n2", 10)),
        folds=int(values.get("folds", 5)),
        solver=_solver_options(values),
    )
    threads = _resolve_threads(args)
    report = run_study(spec, threads=threads)
    out = Path(args.output)
    save_report_csv(out / "report.csv", report)
    outputs = ["report.csv"]
    sizes_max = int(values.get("coverage_sizes_max", 0))
    if sizes_max > 0:
        curves = coverage_study(spec, sizes=tuple(range(1, sizes_max + 1)), threads=threads)
        save_curves_csv(out / "curves.csv", curves)
        outputs.append("curves.csv")
    manifest = dict(report.manifest)
    manifest.update({
        "command": "study",
        "config": {k: v for k, v in values.items()},
        "threads": threads,
        "failures": list(report.failures),
        "outputs": outputs,
    })
    save_manifest(out / "manifest.json", manifest)
    for name in sorted(report.summary):
        mse_b = report.summary[name]["mse_beta"]
        mse_B = report.summary[name]["mse_B"]
        print(f"{name}: MSE(beta) {mse_b[0]:.3f} ({mse_b[1]:.3f}), "
              f"MSE(B) {mse_B[0]:.3f} ({mse_B[1]:.3f})")
    if report.failures:
        print(f"warning: {len(report.failures)} replicate-method failures recorded")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrs",
        description="Joint confounder screening and sparse-plus-low-rank regression.",
    )
    parser.add_argument("--version", action="version", version=f"slrs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset from a scenario config")
    p.add_argument("config", help="scenario config file (key = value)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--tensor-format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("screen", help="compute screening scores and a selected set")
    p.add_argument("dataset", help="dataset directory (X.csv, Y.csv, Z.bin|Z.csv)")
    p.add_argument("--blocks", help="blocks.csv for blockwise screening")
    p.add_argument("--target", type=int, default=None,
                   help="minimum selected-set size (default floor(n/log n), doubled for blockwise)")
    p.add_argument("--ratio", type=float, default=1.0, help="|M2| / |M1*| growth ratio")
    p.add_argument("--method", choices=("joint", "outcome", "intersection", "blockwise"),
                   default="joint")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("fit", help="penalized fit on a selected covariate set")
    p.add_argument("dataset")
    p.add_argument("--selected", required=True, help="selected.csv from the screen step")
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--cv", action="store_true", help="choose penalties by cross-validation")
    p.add_argument("--grid-n1", type=int, default=10)
    p.add_argument("--grid-n2", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("permtest", help="permutation test of the exposure R^2")
    p.add_argument("dataset")
    p.add_argument("--n-perm", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast-fit", action="store_true",
                   help="screen once on the observed data instead of per permutation")
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--grid-n1", type=int, default=10)
    p.add_argument("--grid-n2", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_permtest)

    p = sub.add_parser("study", help="run a Monte Carlo benchmark study")
    p.add_argument("config", help="study config file (scenario + study keys)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (SLRS_THREADS overrides)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("schema", help="print the config file schema")
    p.set_defaults(func=lambda args: print(CONFIG_SCHEMA) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "threads"):
        args.threads = None
    try:
        return args.func(args) or EXIT_OK
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, SlrsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
