"""Evaluation quantities: coefficient MSEs, screening coverage, selection
rates, variance explained, and the permutation test.

Selection rates treat a coefficient as selected iff it is exactly nonzero;
soft-thresholding produces exact zeros so no epsilon is involved.
Coordinates outside the screened set count as zero.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .exceptions import DimensionMismatch, EmptySet, EmptyTruth, ValidationError, ZeroVariance


@dataclass(frozen=True)
class SelectionRates:
    sensitivity: float
    specificity: float
    instrumental_specificity: float | None


@dataclass(frozen=True)
class MetricReport:
    """All evaluation quantities for one fitted replicate.

    ``instrumental_specificity`` is None when the truth has no instruments
    and ``perm_pvalue`` is None unless a permutation test was run.
    """

    mse_beta: float
    mse_B: float
    coverage: float
    sensitivity: float
    specificity: float
    instrumental_specificity: float | None
    r2: float
    perm_pvalue: float | None = None


@dataclass(frozen=True)
class PermutationTestResult:
    observed_r2: float
    p_value: float
    null_r2: np.ndarray


def mse_beta(est, truth) -> float:
    """Squared Euclidean distance over all covariate coefficients."""
    est = np.asarray(est, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if est.shape != truth.shape:
        raise DimensionMismatch("coefficient vectors have different lengths")
    d = est - truth
    return float(d @ d)


def mse_B(est, truth) -> float:
    """Squared Frobenius distance between exposure coefficient images."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise DimensionMismatch("coefficient matrices have different shapes")
    d = (est - truth).ravel()
    return float(d @ d)


def coverage_proportion(selected, m1) -> float:
    """|selected intersect m1| / |m1|."""
    m1 = np.asarray(m1, dtype=np.intp).ravel()
    if m1.size == 0:
        raise EmptyTruth("the true adjustment set is empty")
    selected = np.asarray(selected, dtype=np.intp).ravel()
    return float(np.isin(m1, selected).sum()) / m1.size


def sensitivity_specificity(beta_hat, M, truth) -> SelectionRates:
    """Selection rates of a fitted coefficient vector against the truth.

    sensitivity: fraction of the true adjustment set with nonzero
    estimates; specificity: fraction of the complement with zero
    estimates; instrumental specificity: the same restricted to the
    instruments (None when there are no instruments).
    """
    beta_hat = np.asarray(beta_hat, dtype=np.float64).ravel()
    M = np.asarray(M, dtype=np.intp).ravel()
    if beta_hat.shape != M.shape:
        raise DimensionMismatch("beta_hat must align with the screened index set")
    s = truth.beta_star.shape[0]
    nonzero = np.zeros(s, dtype=bool)
    nonzero[M[beta_hat != 0.0]] = True

    m1 = truth.m1
    if m1.size == 0:
        raise EmptySet("the true adjustment set is empty")
    not_m1 = np.sort(np.concatenate([truth.instruments, truth.irrelevant]))
    if not_m1.size == 0:
        raise EmptySet("the instrumental-plus-irrelevant set is empty")
    sens = float(nonzero[m1].sum()) / m1.size
    spec = float((~nonzero[not_m1]).sum()) / not_m1.size
    instr = None
    if truth.instruments.size:
        instr = float((~nonzero[truth.instruments]).sum()) / truth.instruments.size
    return SelectionRates(sens, spec, instr)


def r_squared(data: Dataset, B_hat) -> float:
    """Fraction of outcome variance explained by the exposure term.

    R^2 = [sum (y_i - ybar)^2 - sum (y_i - ybar - <Z_i, B>)^2]
          / sum (y_i - ybar)^2.
    """
    B_hat = np.asarray(B_hat, dtype=np.float64)
    if B_hat.shape != (data.p, data.q):
        raise DimensionMismatch("B_hat has the wrong shape")
    y = data.Y - data.Y.mean()
    sst = float(y @ y)
    if sst == 0.0:
        raise ZeroVariance("outcome has zero variance")
    resid = y - data.z_matrix() @ B_hat.ravel()
    return (sst - float(resid @ resid)) / sst


def evaluate_fit(data: Dataset, fit_result, truth, selected=None,
                 perm_pvalue: float | None = None) -> MetricReport:
    """Score one fit against the ground truth.

    ``selected`` is the screening set used for the coverage entry; it
    defaults to the fit's own index set (appropriate for the oracle, whose
    adjustment set is the truth itself).
    """
    if selected is None:
        selected = fit_result.indices
    rates = sensitivity_specificity(fit_result.beta, fit_result.indices, truth)
    return MetricReport(
        mse_beta=mse_beta(fit_result.beta_full(truth.beta_star.size), truth.beta_star),
        mse_B=mse_B(fit_result.B, truth.B),
        coverage=coverage_proportion(selected, truth.m1),
        sensitivity=rates.sensitivity,
        specificity=rates.specificity,
        instrumental_specificity=rates.instrumental_specificity,
        r2=r_squared(data, fit_result.B),
        perm_pvalue=perm_pvalue,
    )


def _null_r2_chunk(args):
    data, pipeline, seed, ks = args
    out = np.empty(len(ks))
    for i, k in enumerate(ks):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        permuted = Dataset(data.X, data.Z, rng.permutation(data.Y), validate=False)
        out[i] = r_squared(permuted, pipeline(permuted))
    return out


def permutation_test(data: Dataset, pipeline, n_perm: int = 1000, seed: int = 0,
                     n_jobs: int = 1) -> PermutationTestResult:
    """Permutation p-value for the variance explained by the exposure.

    ``pipeline`` maps a Dataset to an estimated exposure coefficient
    matrix; it is rerun from scratch on every permuted outcome.  The
    p-value is n_perm^-1 * #{permutations with R*^2 >= observed R^2}
    (no +1 correction, so 0 is attainable).  Permutation k draws from the
    seed stream (seed, k); the reduction order is fixed, so results do not
    depend on ``n_jobs``.
    """
    if n_perm < 1:
        raise ValidationError("n_perm must be at least 1")
    observed = r_squared(data, pipeline(data))
    if n_jobs > 1 and n_perm > 1:
        chunks = np.array_split(np.arange(n_perm), min(4 * n_jobs, n_perm))
        jobs = [(data, pipeline, seed, list(ks)) for ks in chunks if ks.size]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            null = np.concatenate(list(pool.map(_null_r2_chunk, jobs)))
    else:
        null = _null_r2_chunk((data, pipeline, seed, list(range(n_perm))))
    p = float(np.count_nonzero(null >= observed)) / n_perm
    return PermutationTestResult(observed_r2=observed, p_value=p, null_r2=null)
