"""Marginal screening scores and screening-set construction.

Two marginal scores are computed for every covariate: the absolute
marginal outcome coefficient |n^-1 sum_i X_il Y_i| and the operator norm
of the marginal exposure coefficient n^-1 sum_i X_il Z_i.  The joint
screening set is the union of the top-k covariates under each score with
k grown until the union reaches a target size; the blockwise variant adds
two further component sets built from block-averaged scores.

Score computation is separated from set selection (``screen_scores``
versus the ``*_from_scores`` selectors) so that one pass over the data can
feed several screening strategies; the data-level wrappers compose the
two.  Ties at a threshold always break toward the smaller covariate
index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, GroundTruth
from .exceptions import (
    BadK,
    BadMethod,
    BadTarget,
    NoConvergence,
    ValidationError,
)

POWER_TOL = 1e-8
POWER_MAX_ITER = 1000
# stop the Rayleigh-quotient iteration a decade below the requested
# tolerance so the returned value honors `tol` even with modest spectral gaps
_POWER_SAFETY = 0.1

_EXPOSURE_CHUNK = 256

SCREEN_METHODS = ("joint", "outcome", "intersection", "blockwise")


def default_target(n: int) -> int:
    """Screening-set size floor(n / log n)."""
    return int(np.floor(n / np.log(n)))


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint index blocks covering {0..s-1} (0-based)."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.intp).ravel() for b in self.blocks)
        if not blocks:
            raise ValidationError("partition needs at least one block")
        if min(b.size for b in blocks) == 0:
            raise ValidationError("every block must be nonempty")
        combined = np.concatenate(blocks)
        s = combined.size
        if np.unique(combined).size != s or combined.min() != 0 or combined.max() != s - 1:
            raise ValidationError("blocks must disjointly cover 0..s-1")
        labels = np.empty(s, dtype=np.intp)
        for j, b in enumerate(blocks):
            labels[b] = j
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_labels", labels)

    @property
    def s(self) -> int:
        return self._labels.size

    @property
    def labels(self) -> np.ndarray:
        """Block id of every covariate."""
        return self._labels

    @classmethod
    def from_sizes(cls, sizes) -> "BlockPartition":
        """Contiguous blocks with the given sizes, laid out in order."""
        bounds = np.concatenate([[0], np.cumsum(np.asarray(sizes, dtype=np.intp))])
        return cls(tuple(np.arange(bounds[j], bounds[j + 1]) for j in range(len(sizes))))


@dataclass(frozen=True)
class ScreenScores:
    """Per-covariate marginal scores; block averages only with a partition."""

    outcome_scores: np.ndarray
    exposure_scores: np.ndarray
    block_outcome_scores: np.ndarray | None = None
    block_exposure_scores: np.ndarray | None = None

    @property
    def s(self) -> int:
        return self.outcome_scores.size


@dataclass(frozen=True)
class ScreenResult:
    """Outcome of one screening run.

    ``selected`` is sorted ascending; ``k`` is the common per-component-set
    size (the outcome-set size when an exposure/outcome ratio is in play,
    with the exposure-set size in ``k_exposure``).  ``thresholds`` holds the
    realized score cutoffs gamma1..gamma4 (None where a component set was
    not used).
    """

    scores: ScreenScores
    selected: np.ndarray
    k: int
    thresholds: dict
    target_size: int
    method: str = "joint"
    k_exposure: int | None = None


def operator_norm(A, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER,
                  svd_fallback: bool = True) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    Deterministic: starts from the normalized all-ones vector on the
    smaller Gram side.  Falls back to a dense SVD when the iteration does
    not settle within ``max_iter`` sweeps unless ``svd_fallback`` is False,
    in which case ``NoConvergence`` is raised.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("operator_norm expects a matrix")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    m = G.shape[0]
    v = np.full(m, 1.0 / np.sqrt(m))
    lam_prev = np.inf
    for _ in range(max_iter):
        w = G @ v
        lam = float(v @ w)
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return 0.0
        v = w / wn
        if abs(lam - lam_prev) <= _POWER_SAFETY * tol * max(abs(lam), np.finfo(float).tiny):
            return float(np.sqrt(max(lam, 0.0)))
        lam_prev = lam
    if svd_fallback:
        return float(np.linalg.svd(A, compute_uv=False)[0])
    raise NoConvergence(max_iter, "power iteration")


def _operator_norms_stacked(C: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Power iteration over a stack of matrices, matching operator_norm.

    Each matrix freezes its result at its own convergence sweep and drops
    out of the working stack, so the outputs match per-matrix
    ``operator_norm`` calls to floating-point roundoff (the stack always
    iterates the smaller Gram side of the shared shape).
    """
    m, p, q = C.shape
    if q <= p:
        G = np.matmul(C.transpose(0, 2, 1), C)
    else:
        G = np.matmul(C, C.transpose(0, 2, 1))
    d = G.shape[1]
    v = np.full((m, d), 1.0 / np.sqrt(d))
    out = np.zeros(m)
    active = np.arange(m)
    lam_prev = np.full(m, np.inf)
    tiny = np.finfo(float).tiny
    for _ in range(max_iter):
        w = np.matmul(G, v[:, :, None])[:, :, 0]
        lam = np.einsum("mj,mj->m", v, w)
        wn = np.linalg.norm(w, axis=1)
        zero = wn == 0.0
        done = zero | (
            np.abs(lam - lam_prev) <= _POWER_SAFETY * tol * np.maximum(np.abs(lam), tiny)
        )
        if done.any():
            idx = np.flatnonzero(done)
            vals = np.sqrt(np.maximum(lam[idx], 0.0))
            vals[zero[idx]] = 0.0
            out[active[idx]] = vals
            if idx.size == active.size:
                return out
            keep = np.flatnonzero(~done)
            active = active[keep]
            G = G[keep]
            w = w[keep]
            wn = wn[keep]
            lam = lam[keep]
        v = w / wn[:, None]
        lam_prev = lam
    out[active] = np.linalg.svd(C[active], compute_uv=False)[:, 0]
    return out


def marginal_outcome_scores(data: Dataset) -> np.ndarray:
    """|n^-1 sum_i X_il Y_i| for every covariate l."""
    return np.abs(data.X.T @ data.Y) / data.n


def marginal_exposure_scores(data: Dataset, tol: float = POWER_TOL,
                             max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    """Operator norm of the marginal exposure coefficient per covariate.

    Streams over covariates in fixed-size chunks so only a (chunk, p, q)
    slab of marginal coefficients is ever materialized.
    """
    n, s = data.X.shape
    Zmat = data.z_matrix()
    scores = np.empty(s)
    for start in range(0, s, _EXPOSURE_CHUNK):
        stop = min(start + _EXPOSURE_CHUNK, s)
        C = (data.X[:, start:stop].T @ Zmat) / n
        scores[start:stop] = _operator_norms_stacked(
            C.reshape(stop - start, data.p, data.q), tol, max_iter
        )
    return scores


def block_average(scores, partition: BlockPartition) -> np.ndarray:
    """Replace every score by the mean score of its block."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size != partition.s:
        raise ValidationError("scores length does not match the partition")
    labels = partition.labels
    means = np.bincount(labels, weights=scores) / np.bincount(labels)
    return means[labels]


def screen_scores(data: Dataset, partition: BlockPartition | None = None,
                  tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> ScreenScores:
    """All marginal score vectors for one sample (block scores if a partition)."""
    outcome = marginal_outcome_scores(data)
    exposure = marginal_exposure_scores(data, tol, max_iter)
    if partition is None:
        return ScreenScores(outcome, exposure)
    if partition.s != data.s:
        raise ValidationError("partition does not match the covariate count")
    return ScreenScores(
        outcome, exposure,
        block_average(outcome, partition),
        block_average(exposure, partition),
    )


def _score_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score, ties broken by ascending index."""
    return np.lexsort((np.arange(scores.size), -scores))


def select_top_k(scores, k: int):
    """Top-k indices (sorted ascending) and the realized threshold."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 1 <= k <= scores.size:
        raise BadK(f"k={k} outside [1, {scores.size}]")
    order = _score_order(scores)
    chosen = np.sort(order[:k])
    return chosen, float(scores[order[k - 1]])


def _check_target(target: int, s: int) -> int:
    target = int(target)
    if not 1 <= target <= s:
        raise BadTarget(f"target={target} outside [1, {s}]")
    return target


def joint_screen_from_scores(scores: ScreenScores, target: int,
                             ratio: float = 1.0) -> ScreenResult:
    """Union of outcome/exposure top lists, |M2| = floor(ratio * |M1*|).

    The outcome-set size k1 increases one at a time until the union
    reaches the target.
    """
    if ratio <= 0:
        raise ValidationError("ratio must be positive")
    s = scores.s
    target = _check_target(target, s)
    outcome, exposure = scores.outcome_scores, scores.exposure_scores
    order1, order2 = _score_order(outcome), _score_order(exposure)
    member = np.zeros(s, dtype=bool)
    count = 0
    k2_done = 0
    for k1 in range(1, s + 1):
        idx = order1[k1 - 1]
        if not member[idx]:
            member[idx] = True
            count += 1
        k2 = min(s, int(np.floor(ratio * k1)))
        while k2_done < k2:
            idx = order2[k2_done]
            k2_done += 1
            if not member[idx]:
                member[idx] = True
                count += 1
        if count >= target:
            return ScreenResult(
                scores=scores,
                selected=np.flatnonzero(member),
                k=k1,
                thresholds={
                    "gamma1": float(outcome[order1[k1 - 1]]),
                    "gamma2": float(exposure[order2[k2 - 1]]) if k2 >= 1 else None,
                    "gamma3": None,
                    "gamma4": None,
                },
                target_size=target,
                method="joint",
                k_exposure=k2,
            )
    raise BadTarget(f"target={target} unreachable")  # pragma: no cover


def blockwise_screen_from_scores(scores: ScreenScores, target: int) -> ScreenResult:
    """Union of the four component top-k sets (common k) reaching the target."""
    if scores.block_outcome_scores is None:
        raise ValidationError("blockwise selection needs block-averaged scores")
    s = scores.s
    target = _check_target(target, s)
    vectors = (
        scores.outcome_scores,
        scores.exposure_scores,
        scores.block_outcome_scores,
        scores.block_exposure_scores,
    )
    orders = [_score_order(v) for v in vectors]
    member = np.zeros(s, dtype=bool)
    count = 0
    for k in range(1, s + 1):
        for order in orders:
            idx = order[k - 1]
            if not member[idx]:
                member[idx] = True
                count += 1
        if count >= target:
            return ScreenResult(
                scores=scores,
                selected=np.flatnonzero(member),
                k=k,
                thresholds={
                    f"gamma{j + 1}": float(vectors[j][orders[j][k - 1]]) for j in range(4)
                },
                target_size=target,
                method="blockwise",
                k_exposure=k,
            )
    raise BadTarget(f"target={target} unreachable")  # pragma: no cover


def outcome_screen_from_scores(scores: ScreenScores, target: int) -> ScreenResult:
    """Top covariates by the outcome score alone."""
    target = _check_target(target, scores.s)
    selected, gamma1 = select_top_k(scores.outcome_scores, target)
    return ScreenResult(
        scores=scores,
        selected=selected,
        k=target,
        thresholds={"gamma1": gamma1, "gamma2": None, "gamma3": None, "gamma4": None},
        target_size=target,
        method="outcome",
    )


def intersection_screen_from_scores(scores: ScreenScores, target: int) -> ScreenResult:
    """Covariates in both top lists, sizes kept equal, grown to the target."""
    s = scores.s
    target = _check_target(target, s)
    outcome, exposure = scores.outcome_scores, scores.exposure_scores
    order1, order2 = _score_order(outcome), _score_order(exposure)
    in1 = np.zeros(s, dtype=bool)
    in2 = np.zeros(s, dtype=bool)
    count = 0
    for k in range(1, s + 1):
        for flags, other, order in ((in1, in2, order1), (in2, in1, order2)):
            idx = order[k - 1]
            flags[idx] = True
            if other[idx]:
                count += 1
        if count >= target:
            return ScreenResult(
                scores=scores,
                selected=np.flatnonzero(in1 & in2),
                k=k,
                thresholds={
                    "gamma1": float(outcome[order1[k - 1]]),
                    "gamma2": float(exposure[order2[k - 1]]),
                    "gamma3": None,
                    "gamma4": None,
                },
                target_size=target,
                method="intersection",
                k_exposure=k,
            )
    raise BadTarget(f"target={target} unreachable by intersection")


def select_screen(scores: ScreenScores, method: str, target: int,
                  ratio: float = 1.0) -> ScreenResult:
    """Dispatch set selection on precomputed scores."""
    if method == "joint":
        return joint_screen_from_scores(scores, target, ratio)
    if method == "blockwise":
        return blockwise_screen_from_scores(scores, target)
    if method == "outcome":
        return outcome_screen_from_scores(scores, target)
    if method == "intersection":
        return intersection_screen_from_scores(scores, target)
    raise BadMethod(f"unknown screening method {method!r}")


def joint_screen(data: Dataset, target: int | None = None,
                 tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> ScreenResult:
    """Joint screening set with equal component sizes |M1*| = |M2| = k.

    k is the smallest integer whose union reaches the target size,
    floor(n / log n) by default.
    """
    if target is None:
        target = default_target(data.n)
    return joint_screen_from_scores(screen_scores(data, None, tol, max_iter), target)


def joint_screen_ratio(data: Dataset, target: int | None, ratio: float,
                       tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> ScreenResult:
    """Joint screening with the exposure set floor(ratio) times the outcome set."""
    if target is None:
        target = default_target(data.n)
    return joint_screen_from_scores(screen_scores(data, None, tol, max_iter), target, ratio)


def blockwise_screen(data: Dataset, partition: BlockPartition, target: int | None = None,
                     tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> ScreenResult:
    """Blockwise screening set; target defaults to 2 * floor(n / log n)."""
    if target is None:
        target = 2 * default_target(data.n)
    return blockwise_screen_from_scores(screen_scores(data, partition, tol, max_iter), target)


def screen(data: Dataset, method: str = "joint", target: int | None = None,
           ratio: float = 1.0, partition: BlockPartition | None = None,
           tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> ScreenResult:
    """Compute scores and select a screening set with the given strategy."""
    if method not in SCREEN_METHODS:
        raise BadMethod(f"unknown screening method {method!r}")
    if method == "blockwise" and partition is None:
        raise ValidationError("blockwise screening needs a block partition")
    if target is None:
        target = (2 if method == "blockwise" else 1) * default_target(data.n)
    scores = screen_scores(data, partition if method == "blockwise" else None, tol, max_iter)
    return select_screen(scores, method, target, ratio)


@dataclass(frozen=True)
class CoverageCurves:
    """Replicate-averaged coverage of the target adjustment set by size."""

    method: str
    sizes: np.ndarray
    overall: np.ndarray
    per_variable: dict
    n_replicates: int


def _coverage_one(scores: ScreenScores, m1: np.ndarray, method: str,
                  sizes: np.ndarray) -> np.ndarray:
    """Per-variable interpolated coverage indicators for one replicate.

    Grows the component-set size k one variable per component set per step
    (component sizes kept equal), records the attained (size, membership)
    points, and linearly interpolates onto the requested sizes with a
    (0, no coverage) anchor.  Sizes beyond the largest attained point keep
    its value.  Returns an array of shape (len(sizes), len(m1)).
    """
    vectors = [scores.outcome_scores, scores.exposure_scores]
    if method == "blockwise":
        if scores.block_outcome_scores is None:
            raise ValidationError("blockwise coverage needs block-averaged scores")
        vectors += [scores.block_outcome_scores, scores.block_exposure_scores]
    orders = [_score_order(v) for v in vectors]
    s = scores.s
    max_size = float(sizes.max())

    member = np.zeros(s, dtype=bool)
    in1 = np.zeros(s, dtype=bool)
    in2 = np.zeros(s, dtype=bool)
    attained = {0: np.zeros(m1.size, dtype=bool)}
    for k in range(1, s + 1):
        if method == "outcome":
            in1[orders[0][k - 1]] = True
            current = in1
            size = k
        elif method == "intersection":
            in1[orders[0][k - 1]] = True
            in2[orders[1][k - 1]] = True
            current = in1 & in2
            size = int(current.sum())
        else:
            for order in orders:
                member[order[k - 1]] = True
            current = member
            size = int(current.sum())
        if size not in attained:
            attained[size] = current[m1].copy()
        if size >= max_size:
            break
    xs = np.array(sorted(attained), dtype=np.float64)
    mat = np.vstack([attained[int(x)] for x in xs]).astype(np.float64)
    out = np.empty((sizes.size, m1.size))
    for j in range(m1.size):
        out[:, j] = np.interp(sizes, xs, mat[:, j])
    return out


def coverage_from_scores(score_sets, m1_sets, method: str, sizes) -> CoverageCurves:
    """Replicate-averaged coverage curves from precomputed score vectors."""
    if method not in SCREEN_METHODS:
        raise BadMethod(f"unknown coverage method {method!r}")
    sizes = np.asarray(sizes, dtype=np.float64).ravel()
    if sizes.size == 0 or np.any(sizes < 1):
        raise ValidationError("sizes must be at least 1")
    total_overall = np.zeros(sizes.size)
    per_var_totals: dict = {}
    n_reps = 0
    for scores, m1 in zip(score_sets, m1_sets):
        m1 = np.asarray(m1, dtype=np.intp).ravel()
        curves = _coverage_one(scores, m1, method, sizes)
        total_overall += curves.mean(axis=1)
        for j, var in enumerate(m1):
            per_var_totals.setdefault(int(var), np.zeros(sizes.size))
            per_var_totals[int(var)] += curves[:, j]
        n_reps += 1
    if n_reps == 0:
        raise ValidationError("no replicates supplied")
    return CoverageCurves(
        method=method,
        sizes=sizes,
        overall=total_overall / n_reps,
        per_variable={v: t / n_reps for v, t in per_var_totals.items()},
        n_replicates=n_reps,
    )


def coverage_curve(replicates, method: str, sizes, partitions=None,
                   tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> CoverageCurves:
    """Average coverage of the true adjustment set at each requested size.

    ``replicates`` is a sequence of (Dataset, GroundTruth) pairs (an index
    array may stand in for the truth); ``partitions`` supplies per-replicate
    block partitions for the blockwise method.  Scores are computed here;
    use ``coverage_from_scores`` when they are already available.
    """
    score_sets = []
    m1_sets = []
    for r, (data, truth) in enumerate(replicates):
        part = None
        if method == "blockwise":
            if partitions is None:
                raise ValidationError("blockwise coverage needs partitions")
            part = partitions[r]
        score_sets.append(screen_scores(data, part, tol, max_iter))
        m1 = truth.m1 if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=np.intp)
        m1_sets.append(m1)
    return coverage_from_scores(score_sets, m1_sets, method, sizes)
