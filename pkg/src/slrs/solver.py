"""Accelerated proximal-gradient solver for the penalized problem

    min over (beta, B) of  (2n)^-1 sum_i (Y_i - <Z_i,B> - <X_iM, beta>)^2
                           + lambda1 ||beta||_1 + lambda2 ||B||_*

The smooth part is handled with Nesterov extrapolation and a fixed step
delta = n / lambda_max(X_new' X_new) where X_new stacks the screened
covariate columns and the vectorized exposures; the two penalties are
handled by their exact prox maps (componentwise soft-thresholding and
singular-value thresholding).  Iterations start from zero and stop when
the relative objective change over one iteration falls below ``rel_tol``.

``_fit_grid`` runs many (lambda1, lambda2) chains simultaneously on shared
data so a cross-validation grid costs a handful of matrix-matrix products
per iteration instead of one matrix-vector product per chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import scipy.linalg

from .dataset import Dataset
from .exceptions import NoConvergence, SvdFailure, ValidationError
from .screening import POWER_MAX_ITER, POWER_TOL, _POWER_SAFETY


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 5000
    rel_tol: float = 1e-6
    record_trace: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.rel_tol <= 0:
            raise ValidationError("rel_tol must be positive")


@dataclass(frozen=True)
class FitResult:
    """Solution of one penalized fit.

    ``beta`` is aligned with ``indices`` (the screened covariate set, 0-based);
    soft-thresholded entries are exactly zero.  ``objective_trace`` starts at
    the all-zero initializer's objective when trace recording is on.
    """

    beta: np.ndarray
    B: np.ndarray
    lambda1: float
    lambda2: float
    iterations: int
    converged: bool
    step_size: float
    objective: float
    indices: np.ndarray
    objective_trace: np.ndarray | None = None

    def beta_full(self, s: int) -> np.ndarray:
        """Coefficients embedded into a length-s vector with zeros."""
        full = np.zeros(s)
        full[self.indices] = self.beta
        return full


def soft_threshold(a, lam: float) -> np.ndarray:
    """Componentwise sgn(a) * max(|a| - lam, 0)."""
    if lam < 0:
        raise ValidationError("lam must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)


def _svd_single(A):
    # gesdd (numpy's default) occasionally fails to converge; gesvd is
    # slower but far more robust
    try:
        return np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise SvdFailure(str(exc)) from exc


def _svd_stack(A):
    """Batched thin SVD with a per-matrix robust fallback."""
    try:
        return np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        parts = [_svd_single(A[j]) for j in range(A.shape[0])]
        return (
            np.stack([p[0] for p in parts]),
            np.stack([p[1] for p in parts]),
            np.stack([p[2] for p in parts]),
        )


def svt(A, lam: float) -> np.ndarray:
    """Singular value thresholding: soft-threshold the spectrum of A."""
    if lam < 0:
        raise ValidationError("lam must be nonnegative")
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    U, sv, Vt = _svd_single(A)
    return (U * np.maximum(sv - lam, 0.0)) @ Vt


def _design_parts(data: Dataset, M):
    M = np.asarray(M, dtype=np.intp).ravel()
    if M.size and (M.min() < 0 or M.max() >= data.s):
        raise ValidationError("index set out of range")
    return M, data.X[:, M], data.z_matrix()


def _gram_lambda_max(Xm: np.ndarray, Zmat: np.ndarray, tol: float, max_iter: int) -> float:
    """Largest eigenvalue of [Xm | Zmat]' [Xm | Zmat], matrix-free."""
    n = Zmat.shape[0]
    m = Xm.shape[1]
    d = m + Zmat.shape[1]
    v = np.full(d, 1.0 / np.sqrt(d))
    lam_prev = np.inf
    for _ in range(max_iter):
        t = Xm @ v[:m] + Zmat @ v[m:] if m else Zmat @ v[m:]
        w = np.concatenate([Xm.T @ t, Zmat.T @ t]) if m else Zmat.T @ t
        lam = float(v @ w)
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return 0.0
        v = w / wn
        if abs(lam - lam_prev) <= _POWER_SAFETY * tol * max(abs(lam), np.finfo(float).tiny):
            return max(lam, 0.0)
        lam_prev = lam
    raise NoConvergence(max_iter, "step-size power iteration")


def step_size(data: Dataset, M, tol: float = POWER_TOL,
              max_iter: int = POWER_MAX_ITER) -> float:
    """Fixed step delta = n / lambda_max(X_new' X_new) for the solver.

    Falls back to a dense SVD of the combined design if the matrix-free
    power iteration does not settle.
    """
    M, Xm, Zmat = _design_parts(data, M)
    try:
        lam_max = _gram_lambda_max(Xm, Zmat, tol, max_iter)
    except NoConvergence:
        sv = np.linalg.svd(np.hstack([Xm, Zmat]), compute_uv=False)
        lam_max = float(sv[0] ** 2)
    if lam_max == 0.0:
        raise ValidationError("combined design is zero; step size undefined")
    return data.n / lam_max


def _fit_grid(Xm, Zmat, Y, p, q, lam1, lam2, delta, max_iter, rel_tol,
              record_trace=False, pen_mask=None):
    """Run FISTA chains for every (lam1[j], lam2[j]) pair on shared data.

    Returns (betas, Bs, objective, iterations, converged, traces) with one
    row/entry per chain.  Converged chains are frozen and dropped from the
    working set so the per-iteration matrix products shrink as the grid
    settles.  ``pen_mask`` (0/1 per coordinate) exempts coordinates from
    the L1 penalty.
    """
    n = Y.shape[0]
    m = Xm.shape[1]
    pq = p * q
    k = lam1.shape[0]
    if pen_mask is None:
        pen_mask = np.ones(m)

    out_beta = np.zeros((k, m))
    out_B = np.zeros((k, pq))
    out_obj = np.empty(k)
    out_iters = np.zeros(k, dtype=np.intp)
    out_conv = np.zeros(k, dtype=bool)

    q0 = 0.5 * float(Y @ Y) / n
    traces = [[q0] for _ in range(k)] if record_trace else None

    active = np.arange(k)
    beta_prev = np.zeros((m, k))
    beta_cur = np.zeros((m, k))
    Bv_prev = np.zeros((pq, k))
    Bv_cur = np.zeros((pq, k))
    F_prev = np.zeros((n, k))
    F_cur = np.zeros((n, k))
    q_prev = np.full(k, q0)
    thr1 = lam1 * delta
    thr2 = lam2 * delta

    alpha_prev, alpha_cur = 0.0, 1.0
    tiny = np.finfo(float).tiny
    for t in range(1, max_iter + 1):
        c = (alpha_prev - 1.0) / alpha_cur
        R = F_cur + c * (F_cur - F_prev)
        R -= Y[:, None]
        if m:
            beta_s = beta_cur + c * (beta_cur - beta_prev)
            beta_new = beta_s - (delta / n) * (Xm.T @ R)
            np.sign(beta_new, out=beta_s)
            beta_new = np.abs(beta_new)
            beta_new -= pen_mask[:, None] * thr1[active]
            np.maximum(beta_new, 0.0, out=beta_new)
            beta_new *= beta_s
        else:
            beta_new = beta_cur
        Bv_s = Bv_cur + c * (Bv_cur - Bv_prev)
        Bv_s -= (delta / n) * (Zmat.T @ R)
        U, sv, Vt = _svd_stack(np.ascontiguousarray(Bv_s.T).reshape(-1, p, q))
        sv_new = np.maximum(sv - thr2[active][:, None], 0.0)
        Bv_new = ((U * sv_new[:, None, :]) @ Vt).reshape(-1, pq).T
        F_new = (Xm @ beta_new if m else 0.0) + Zmat @ Bv_new
        R = F_new - Y[:, None]
        q_new = 0.5 * np.einsum("ij,ij->j", R, R) / n
        if m:
            q_new += lam1[active] * (pen_mask @ np.abs(beta_new))
        q_new += lam2[active] * sv_new.sum(axis=1)
        if record_trace:
            for j, chain in enumerate(active):
                traces[chain].append(float(q_new[j]))

        done = np.abs(q_new - q_prev) <= rel_tol * np.maximum(np.abs(q_prev), tiny)
        if done.any() or t == max_iter:
            finished = done if t < max_iter else np.ones_like(done)
            idx = np.flatnonzero(finished)
            chains = active[idx]
            if m:
                out_beta[chains] = beta_new[:, idx].T
            out_B[chains] = Bv_new[:, idx].T
            out_obj[chains] = q_new[idx]
            out_iters[chains] = t
            out_conv[chains] = done[idx]
            if idx.size == active.size:
                break
            keep = np.flatnonzero(~finished)
            active = active[keep]
            beta_prev, beta_cur = beta_cur[:, keep], beta_new[:, keep]
            Bv_prev, Bv_cur = Bv_cur[:, keep], Bv_new[:, keep]
            F_prev, F_cur = F_cur[:, keep], F_new[:, keep]
            q_prev = q_new[keep]
        else:
            beta_prev, beta_cur = beta_cur, beta_new
            Bv_prev, Bv_cur = Bv_cur, Bv_new
            F_prev, F_cur = F_cur, F_new
            q_prev = q_new
        alpha_prev, alpha_cur = alpha_cur, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * alpha_cur**2))

    return out_beta, out_B.reshape(k, p, q), out_obj, out_iters, out_conv, traces


def fit(data: Dataset, M, lambda1: float, lambda2: float,
        options: SolverOptions | None = None, delta: float | None = None,
        unpenalized=()) -> FitResult:
    """Solve the penalized problem on the screened set M.

    An empty M fits the exposure coefficient alone.  The result is
    returned even when the iteration budget runs out (``converged`` False).
    ``delta`` overrides the step size when the caller has already computed
    it for the same design; covariate indices in ``unpenalized`` (a subset
    of M, e.g. clinical covariates) are exempt from the L1 penalty.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValidationError("penalty weights must be nonnegative")
    opts = options or SolverOptions()
    M, Xm, Zmat = _design_parts(data, M)
    if delta is None:
        delta = step_size(data, M)
    pen_mask = None
    unpenalized = np.asarray(list(unpenalized), dtype=np.intp)
    if unpenalized.size:
        if not np.isin(unpenalized, M).all():
            raise ValidationError("unpenalized indices must belong to M")
        pen_mask = (~np.isin(M, unpenalized)).astype(np.float64)
    betas, Bs, obj, iters, conv, traces = _fit_grid(
        Xm, Zmat, data.Y, data.p, data.q,
        np.array([lambda1]), np.array([lambda2]),
        delta, opts.max_iter, opts.rel_tol, record_trace=opts.record_trace,
        pen_mask=pen_mask,
    )
    return FitResult(
        beta=betas[0],
        B=Bs[0],
        lambda1=float(lambda1),
        lambda2=float(lambda2),
        iterations=int(iters[0]),
        converged=bool(conv[0]),
        step_size=float(delta),
        objective=float(obj[0]),
        indices=M,
        objective_trace=np.asarray(traces[0]) if traces is not None else None,
    )
