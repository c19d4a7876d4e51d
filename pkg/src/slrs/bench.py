"""Monte Carlo study harness.

A study runs R replicates of: generate a scenario, screen, tune and fit
one or more method combinations, and score the fits against the planted
truth.  Replicates run in parallel (each one single-threaded and seeded
from (base_seed, replicate)); aggregation always reduces in replicate
order so reports are identical whatever the worker count.  A failed
replicate-method pair is recorded and excluded from the aggregates rather
than retried.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .exceptions import BadMethod, ValidationError
from .metrics import evaluate_fit
from .screening import (
    SCREEN_METHODS,
    CoverageCurves,
    coverage_from_scores,
    default_target,
    screen_scores,
    select_screen,
)
from .screening import BlockPartition, screen
from .simulate import ScenarioConfig, make_scenario, replicate_seed, scenario_with_seed
from .solver import SolverOptions
from .tuning import cv_fit

ESTIMATORS = ("proposed", "oracle", "no_lasso")


@dataclass(frozen=True)
class TwoStepPipeline:
    """Screen-then-tune-then-fit pipeline returning the exposure coefficient.

    The callable form makes it usable as the permutation-test pipeline; the
    whole two-step procedure is rerun on every input unless a fixed
    screened set is installed (``with_fixed_set``, the fast mode).
    """

    target: int | None = None
    ratio: float = 1.0
    method: str = "joint"
    partition: BlockPartition | None = None
    grid_n1: int = 10
    grid_n2: int = 10
    folds: int = 5
    seed: int = 0
    options: SolverOptions = field(default_factory=SolverOptions)
    fixed_set: np.ndarray | None = None

    def screened_set(self, data) -> np.ndarray:
        if self.fixed_set is not None:
            return self.fixed_set
        return screen(data, method=self.method, target=self.target,
                      ratio=self.ratio, partition=self.partition).selected

    def __call__(self, data) -> np.ndarray:
        M = self.screened_set(data)
        fitres, _ = cv_fit(data, M, self.grid_n1, self.grid_n2, self.folds,
                           self.seed, self.options)
        return fitres.B

    def with_fixed_set(self, data) -> "TwoStepPipeline":
        """Freeze the screened set computed on ``data`` (fit-only fast mode)."""
        from dataclasses import replace

        return replace(self, fixed_set=self.screened_set(data))

METRIC_KEYS = (
    "mse_beta",
    "mse_B",
    "coverage",
    "sensitivity",
    "specificity",
    "instrumental_specificity",
    "r2",
    "lambda1",
    "lambda2",
    "iterations",
    "converged",
)


@dataclass(frozen=True)
class Method:
    """One (screening, estimator) combination."""

    screen: str = "joint"
    estimator: str = "proposed"

    def __post_init__(self):
        if self.screen not in SCREEN_METHODS:
            raise BadMethod(f"unknown screening method {self.screen!r}")
        if self.estimator not in ESTIMATORS:
            raise BadMethod(f"unknown estimator {self.estimator!r}")

    @property
    def name(self) -> str:
        return f"{self.screen}:{self.estimator}"

    @classmethod
    def parse(cls, text: str) -> "Method":
        parts = text.split(":")
        if len(parts) != 2:
            raise BadMethod(f"method must look like 'joint:proposed', got {text!r}")
        return cls(screen=parts[0], estimator=parts[1])


@dataclass(frozen=True)
class StudySpec:
    """Everything needed to reproduce a Monte Carlo study."""

    scenario: ScenarioConfig
    methods: tuple
    replicates: int = 20
    base_seed: int = 0
    target: int | None = None
    ratio: float = 1.0
    grid_n1: int = 10
    grid_n2: int = 10
    folds: int = 5
    solver: SolverOptions = field(default_factory=SolverOptions)
    coverage_sizes: tuple | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        methods = tuple(
            Method.parse(m) if isinstance(m, str) else m for m in self.methods
        )
        if not methods:
            raise ValidationError("at least one method is required")
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class StudyReport:
    """Aggregated study results.

    ``summary[name][metric]`` is a (mean, se) pair (se is nan with a single
    successful replicate); ``rows[name]`` is the full per-replicate metric
    table in replicate order.
    """

    summary: dict
    rows: dict
    failures: tuple
    manifest: dict


def _method_target(spec: StudySpec, method: Method, n: int) -> int:
    if spec.target is not None:
        return spec.target
    return (2 if method.screen == "blockwise" else 1) * default_target(n)


def _run_method(spec: StudySpec, scenario, scores, method: Method, cv_seed: int,
                screen_cache: dict) -> dict:
    data, truth = scenario.data, scenario.truth
    if method.estimator == "oracle":
        M = truth.m1
        fitres, _ = cv_fit(
            data, M, n2=spec.grid_n2, folds=spec.folds, seed=cv_seed,
            options=spec.solver, lambda1_zero=True,
        )
    else:
        key = (method.screen, _method_target(spec, method, data.n))
        if key not in screen_cache:
            screen_cache[key] = select_screen(scores, method.screen, key[1], spec.ratio)
        M = screen_cache[key].selected
        if method.estimator == "proposed":
            fitres, _ = cv_fit(
                data, M, spec.grid_n1, spec.grid_n2, spec.folds, cv_seed, spec.solver,
            )
        else:
            fitres, _ = cv_fit(
                data, M, n2=spec.grid_n2, folds=spec.folds, seed=cv_seed,
                options=spec.solver, lambda1_zero=True,
            )
    report = evaluate_fit(data, fitres, truth, selected=M)
    return {
        "mse_beta": report.mse_beta,
        "mse_B": report.mse_B,
        "coverage": report.coverage,
        "sensitivity": report.sensitivity,
        "specificity": report.specificity,
        "instrumental_specificity": (
            np.nan if report.instrumental_specificity is None
            else report.instrumental_specificity
        ),
        "r2": report.r2,
        "lambda1": fitres.lambda1,
        "lambda2": fitres.lambda2,
        "iterations": float(fitres.iterations),
        "converged": float(fitres.converged),
    }


def _run_replicate(args):
    spec, r = args
    started = time.perf_counter()
    # single BLAS thread keeps replicate numerics identical whatever the
    # worker count; parallelism lives at the replicate level
    with threadpool_limits(limits=1):
        cfg = scenario_with_seed(spec.scenario, spec.base_seed, r)
        scenario = make_scenario(cfg)
        needs_blocks = any(m.screen == "blockwise" for m in spec.methods)
        scores = screen_scores(scenario.data, scenario.partition if needs_blocks else None)
        cv_seed = cfg.seed
        rows = {}
        failures = []
        screen_cache: dict = {}
        for method in spec.methods:
            try:
                rows[method.name] = _run_method(spec, scenario, scores, method, cv_seed,
                                                screen_cache)
            except Exception as exc:  # recorded, never retried
                failures.append((r, method.name, f"{type(exc).__name__}: {exc}"))
    return r, rows, failures, time.perf_counter() - started


def _aggregate(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    mean = float(values.mean())
    if values.size < 2:
        return mean, float("nan")
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


def run_study(spec: StudySpec, threads: int = 1) -> StudyReport:
    """Run all replicates and aggregate mean and SE of every metric."""
    started = time.perf_counter()
    jobs = [(spec, r) for r in range(spec.replicates)]
    if threads > 1 and spec.replicates > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_replicate, jobs))
    else:
        outcomes = [_run_replicate(job) for job in jobs]
    outcomes.sort(key=lambda item: item[0])

    rows: dict = {m.name: [] for m in spec.methods}
    failures: list = []
    timings = []
    for r, method_rows, method_failures, elapsed in outcomes:
        for name in rows:
            if name in method_rows:
                rows[name].append((r, method_rows[name]))
        failures.extend(method_failures)
        timings.append(elapsed)

    summary: dict = {}
    for name, entries in rows.items():
        table = {
            key: np.array([row[key] for _, row in entries], dtype=np.float64)
            for key in METRIC_KEYS
        }
        summary[name] = {key: _aggregate(vals) for key, vals in table.items()}

    manifest = {
        "tool": "slrs",
        "version": __version__,
        "base_seed": spec.base_seed,
        "replicates": spec.replicates,
        "replicate_seeds": [replicate_seed(spec.base_seed, r) for r in range(spec.replicates)],
        "methods": [m.name for m in spec.methods],
        "scenario": _scenario_manifest(spec.scenario),
        "target": spec.target,
        "ratio": spec.ratio,
        "grid": [spec.grid_n1, spec.grid_n2],
        "folds": spec.folds,
        "solver": {
            "max_iter": spec.solver.max_iter,
            "rel_tol": spec.solver.rel_tol,
        },
        "failed": len(failures),
        "wall_seconds": time.perf_counter() - started,
        "replicate_seconds": timings,
    }
    return StudyReport(
        summary=summary,
        rows={name: [row for _, row in entries] for name, entries in rows.items()},
        failures=tuple(failures),
        manifest=manifest,
    )


def _scenario_manifest(cfg: ScenarioConfig) -> dict:
    out = {
        "n": cfg.n, "s": cfg.s, "p": cfg.p, "q": cfg.q,
        "rho1": cfg.rho1, "rho2": cfg.rho2,
        "sigma": cfg.sigma, "sigma_e": cfg.sigma_e,
        "instrument_triples": cfg.instrument_triples,
        "seed": cfg.seed,
    }
    if cfg.ld is not None:
        out["ld"] = {
            "block_sizes": list(cfg.ld.block_sizes),
            "within_corr": cfg.ld.within_corr,
            "maf_range": list(cfg.ld.maf_range),
            "K": cfg.ld.K,
        }
    return out


def _coverage_replicate(args):
    spec, r, needs_blocks = args
    with threadpool_limits(limits=1):
        cfg = scenario_with_seed(spec.scenario, spec.base_seed, r)
        scenario = make_scenario(cfg)
        scores = screen_scores(scenario.data, scenario.partition if needs_blocks else None)
    return r, scores, scenario.truth.m1


def coverage_study(spec: StudySpec, methods=None, sizes=None,
                   threads: int = 1) -> dict:
    """Coverage curves of the screening step for each requested method.

    Scores are computed once per replicate and shared across methods.
    Returns {method: CoverageCurves}.
    """
    if methods is None:
        methods = tuple(dict.fromkeys(m.screen for m in spec.methods))
    for m in methods:
        if m not in SCREEN_METHODS:
            raise BadMethod(f"unknown coverage method {m!r}")
    if sizes is None:
        sizes = spec.coverage_sizes or tuple(range(1, 101))
    needs_blocks = "blockwise" in methods
    jobs = [(spec, r, needs_blocks) for r in range(spec.replicates)]
    if threads > 1 and spec.replicates > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_coverage_replicate, jobs))
    else:
        outcomes = [_coverage_replicate(job) for job in jobs]
    outcomes.sort(key=lambda item: item[0])
    score_sets = [scores for _, scores, _ in outcomes]
    m1_sets = [m1 for _, _, m1 in outcomes]
    return {m: coverage_from_scores(score_sets, m1_sets, m, sizes) for m in methods}
