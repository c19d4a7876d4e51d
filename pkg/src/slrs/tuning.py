"""Penalty-grid construction and five-fold cross-validation.

The grid brackets the exact zero-solution thresholds: at
lambda1 >= ||X_M' Y||_inf / n and lambda2 >= ||n^-1 sum_i Y_i Z_i||_op the
all-zero fit satisfies the optimality conditions, so both axes are
log-spaced over three decades below those maxima.  Selection uses the
one-standard-error rule extended to the 2D grid: among pairs whose mean
validation error is within one SE of the minimum, the most regularized
pair wins, defined as the largest lambda1*lambda2 product with ties going
to the larger lambda2 and then the larger lambda1 (the exposure
coefficient is the inferential target, so heavier nuclear-norm
regularization is preferred).

Folds reuse the full-data standardization: fold training rows are taken
as-is rather than re-centered, keeping fold fits comparable with the
full-data fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .exceptions import BadGridSize, DegenerateGrid, TooFewSamples, ValidationError
from .solver import FitResult, SolverOptions, _fit_grid, fit, step_size

GRID_DYNAMIC_RANGE = 1e-3


@dataclass(frozen=True)
class CvTable:
    """Cross-validation summary over a penalty grid.

    ``fold_errors[j, f]`` is the held-out MSE of grid pair j on fold f;
    ``chosen`` indexes the pair selected by the one-SE rule.
    """

    grid: tuple
    mean_error: np.ndarray
    se_error: np.ndarray
    fold_errors: np.ndarray
    chosen: int
    folds: int
    fold_assignment_seed: int


# relative headroom added to the penalty maxima so the all-zero fit is
# optimal in floating point as well (the first prox step must threshold
# the gradient exactly to zero, whatever the rounding order)
_MAXIMA_MARGIN = 1.0 + 1e-12


def penalty_maxima(data: Dataset, M) -> tuple[float, float]:
    """Smallest (lambda1, lambda2) at which the all-zero fit is optimal.

    lambda1_max = ||X_M' Y||_inf / n and lambda2_max is the operator norm
    of n^-1 sum_i Y_i Z_i (dense SVD; this is a one-off p x q problem),
    both inflated by a relative 1e-12 so the zero solution is exact under
    floating-point arithmetic, not just in exact arithmetic.
    """
    M = np.asarray(M, dtype=np.intp).ravel()
    if M.size:
        lam1_max = float(np.max(np.abs(data.X[:, M].T @ data.Y) / data.n))
    else:
        lam1_max = 0.0
    c_y = (data.Y @ data.z_matrix()).reshape(data.p, data.q) / data.n
    lam2_max = float(np.linalg.svd(c_y, compute_uv=False)[0])
    return lam1_max * _MAXIMA_MARGIN, lam2_max * _MAXIMA_MARGIN


def lambda_grid(data: Dataset, M, n1: int = 10, n2: int = 10) -> list:
    """Cartesian grid of (lambda1, lambda2), each axis log-spaced.

    Axes run ascending over [1e-3 * max, max] with the exact zero-solution
    thresholds as the maxima.
    """
    if n1 < 2 or n2 < 2:
        raise BadGridSize("each grid axis needs at least two points")
    lam1_max, lam2_max = penalty_maxima(data, M)
    if lam1_max == 0.0 or lam2_max == 0.0:
        raise DegenerateGrid("a penalty maximum is zero; the grid would be degenerate")
    g1 = np.geomspace(GRID_DYNAMIC_RANGE * lam1_max, lam1_max, n1)
    g2 = np.geomspace(GRID_DYNAMIC_RANGE * lam2_max, lam2_max, n2)
    return [(float(l1), float(l2)) for l1 in g1 for l2 in g2]


def lambda2_grid(data: Dataset, M, n2: int = 10) -> list:
    """lambda1 = 0 line of the grid, for the no-lasso and oracle fits."""
    if n2 < 2:
        raise BadGridSize("grid axis needs at least two points")
    _, lam2_max = penalty_maxima(data, M)
    if lam2_max == 0.0:
        raise DegenerateGrid("lambda2 maximum is zero; the grid would be degenerate")
    g2 = np.geomspace(GRID_DYNAMIC_RANGE * lam2_max, lam2_max, n2)
    return [(0.0, float(l2)) for l2 in g2]


def _one_se_index(grid, mean_error: np.ndarray, se_error: np.ndarray) -> int:
    best = int(np.argmin(mean_error))
    band = mean_error[best] + se_error[best]
    chosen = None
    chosen_key = None
    for j, (l1, l2) in enumerate(grid):
        if mean_error[j] > band:
            continue
        key = (l1 * l2, l2, l1)
        if chosen is None or key > chosen_key:
            chosen, chosen_key = j, key
    return chosen


def one_se_select(table: CvTable) -> tuple[float, float]:
    """Most-regularized pair within one SE of the minimum mean error."""
    if not table.grid:
        raise ValidationError("empty cross-validation table")
    return table.grid[_one_se_index(table.grid, table.mean_error, table.se_error)]


def cross_validate(data: Dataset, M, grid, folds: int = 5, seed: int = 0,
                   options: SolverOptions | None = None) -> CvTable:
    """Fold-mean and fold-SE of held-out MSE for every grid pair.

    Folds are a seeded shuffle followed by a contiguous split.  Held-out
    predictions use the fold-training fit with full-data standardization
    carried over.
    """
    if folds < 2:
        raise ValidationError("need at least two folds")
    if data.n < folds:
        raise TooFewSamples(f"n={data.n} smaller than folds={folds}")
    grid = [(float(l1), float(l2)) for l1, l2 in grid]
    if not grid:
        raise ValidationError("empty grid")
    opts = options or SolverOptions()
    M = np.asarray(M, dtype=np.intp).ravel()
    lam1 = np.array([g[0] for g in grid])
    lam2 = np.array([g[1] for g in grid])

    perm = np.random.default_rng(seed).permutation(data.n)
    parts = np.array_split(perm, folds)
    fold_errors = np.empty((len(grid), folds))
    Zmat = data.z_matrix()
    for f, val_idx in enumerate(parts):
        train_idx = np.concatenate([parts[g] for g in range(folds) if g != f])
        train = data.rows(train_idx)
        delta = step_size(train, M)
        betas, Bs, _, _, _, _ = _fit_grid(
            train.X[:, M], train.z_matrix(), train.Y, data.p, data.q,
            lam1, lam2, delta, opts.max_iter, opts.rel_tol,
        )
        preds = Zmat[val_idx] @ Bs.reshape(len(grid), -1).T
        if M.size:
            preds += data.X[np.ix_(val_idx, M)] @ betas.T
        resid = data.Y[val_idx, None] - preds
        fold_errors[:, f] = np.mean(resid**2, axis=0)

    mean_error = fold_errors.mean(axis=1)
    se_error = fold_errors.std(axis=1, ddof=1) / np.sqrt(folds)
    chosen = _one_se_index(grid, mean_error, se_error)
    return CvTable(
        grid=tuple(grid),
        mean_error=mean_error,
        se_error=se_error,
        fold_errors=fold_errors,
        chosen=chosen,
        folds=folds,
        fold_assignment_seed=seed,
    )


def cv_fit(data: Dataset, M, n1: int = 10, n2: int = 10, folds: int = 5,
           seed: int = 0, options: SolverOptions | None = None,
           lambda1_zero: bool = False) -> tuple[FitResult, CvTable]:
    """Grid search, one-SE selection, then a full-data fit at the winner.

    With ``lambda1_zero`` the grid is the lambda1 = 0 line (used by the
    oracle and no-lasso comparators).
    """
    grid = lambda2_grid(data, M, n2) if lambda1_zero else lambda_grid(data, M, n1, n2)
    table = cross_validate(data, M, grid, folds, seed, options)
    l1, l2 = table.grid[table.chosen]
    return fit(data, M, l1, l2, options), table


def fit_oracle(data: Dataset, M1_true, lambda2: float,
               options: SolverOptions | None = None) -> FitResult:
    """Fit on the true adjustment set without the L1 penalty."""
    return fit(data, M1_true, 0.0, lambda2, options)


def fit_no_lasso(data: Dataset, M_screened, lambda2: float,
                 options: SolverOptions | None = None) -> FitResult:
    """Fit on the screened set without the L1 penalty."""
    return fit(data, M_screened, 0.0, lambda2, options)
