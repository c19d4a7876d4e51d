"""Data model for scalar-outcome regression with matrix exposures.

The observation model is

    Y_i = sum_l X_il * beta_l + <Z_i, B> + eps_i        (outcome)
    Z_i = sum_l X_il * C_l + E_i                        (exposure)

with X an n x s covariate matrix (columns standardized), Z an n x p x q
exposure stack (each pixel series centered) and Y a centered outcome
vector.  All standardization uses the sample mean and the divisor-n
standard deviation so that moment formulas written with 1/n factors are
reproduced bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConstantColumn, DimensionMismatch, ValidationError

INVARIANT_TOL = 1e-10


def _as_float_array(a, name: str, ndim: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable container for one standardized sample.

    Parameters
    ----------
    X : ndarray, shape (n, s)
        Covariates; every column must have sample mean 0 and divisor-n
        standard deviation 1 (tolerance 1e-10).
    Z : ndarray, shape (n, p, q)
        Matrix exposures; every pixel series must have sample mean 0.
    Y : ndarray, shape (n,)
        Outcome; must have sample mean 0.
    validate : bool
        Skip the invariant checks when False.  Used internally for
        cross-validation folds, which deliberately reuse the full-data
        standardization and therefore do not re-center.
    """

    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        X = _as_float_array(self.X, "X", 2)
        Z = _as_float_array(self.Z, "Z", 3)
        Y = _as_float_array(self.Y, "Y", 1)
        if X.shape[0] != Z.shape[0] or X.shape[0] != Y.shape[0]:
            raise DimensionMismatch(
                f"sample counts disagree: X {X.shape[0]}, Z {Z.shape[0]}, Y {Y.shape[0]}"
            )
        if min(X.shape) < 1 or min(Z.shape) < 1:
            raise ValidationError("all dimensions must be strictly positive")
        if self.validate:
            for name, a in (("X", X), ("Z", Z), ("Y", Y)):
                if not np.all(np.isfinite(a)):
                    raise ValidationError(f"{name} contains non-finite entries")
            n = X.shape[0]
            col_means = X.mean(axis=0)
            if np.max(np.abs(col_means)) > INVARIANT_TOL:
                raise ValidationError("X columns are not centered")
            col_sds = np.sqrt(np.mean(X * X, axis=0) - col_means**2)
            if np.max(np.abs(col_sds - 1.0)) > INVARIANT_TOL:
                raise ValidationError("X columns do not have unit divisor-n sd")
            if abs(Y.mean()) > INVARIANT_TOL:
                raise ValidationError("Y is not centered")
            if n > 0 and np.max(np.abs(Z.mean(axis=0))) > INVARIANT_TOL:
                raise ValidationError("Z pixel series are not centered")
        for a in (X, Z, Y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def s(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[2]

    def z_matrix(self) -> np.ndarray:
        """Exposures flattened to an (n, p*q) matrix (row-major pixels)."""
        return self.Z.reshape(self.n, self.p * self.q)

    def rows(self, idx) -> "Dataset":
        """Row subset without re-standardizing (fold construction)."""
        return Dataset(self.X[idx], self.Z[idx], self.Y[idx], validate=False)


@dataclass(frozen=True)
class GroundTruth:
    """Generating parameters of a simulated scenario.

    ``beta_star`` holds the outcome coefficients over all s covariates and
    ``exposure_images`` maps a covariate index (0-based) to its nonzero
    p x q exposure coefficient image.  The four index sets partition
    {0..s-1}: confounders (both coefficients nonzero), precision variables
    (outcome only), instruments (exposure only), irrelevant (neither).
    """

    beta_star: np.ndarray
    exposure_images: dict
    B: np.ndarray
    confounders: np.ndarray
    precision: np.ndarray
    instruments: np.ndarray
    irrelevant: np.ndarray
    sigma: float
    sigma_e: float
    rho1: float
    rho2: float

    def __post_init__(self):
        s = self.beta_star.shape[0]
        sets = [self.confounders, self.precision, self.instruments, self.irrelevant]
        combined = np.concatenate([np.asarray(a, dtype=np.intp) for a in sets])
        if combined.size != s or np.unique(combined).size != s:
            raise ValidationError("index sets must partition the covariates")
        has_beta = self.beta_star != 0.0
        has_image = np.zeros(s, dtype=bool)
        for l, img in self.exposure_images.items():
            if np.any(np.asarray(img) != 0.0):
                has_image[l] = True
        expect = {
            "confounders": has_beta & has_image,
            "precision": has_beta & ~has_image,
            "instruments": ~has_beta & has_image,
            "irrelevant": ~has_beta & ~has_image,
        }
        for name, mask in expect.items():
            got = np.sort(np.asarray(getattr(self, name), dtype=np.intp))
            want = np.flatnonzero(mask)
            if got.shape != want.shape or np.any(got != want):
                raise ValidationError(f"{name} set disagrees with the coefficient pattern")

    @property
    def m1(self) -> np.ndarray:
        """Target adjustment set: confounders plus precision variables."""
        return np.sort(np.concatenate([self.confounders, self.precision]))


def standardize(raw_X, raw_Z, raw_Y) -> Dataset:
    """Column-standardize X, center Z per pixel and center Y.

    Uses the sample mean and the divisor-n standard deviation.  Raises
    ``ConstantColumn`` for any zero-variance X column and
    ``DimensionMismatch`` when the sample counts disagree.
    """
    X = _as_float_array(raw_X, "raw_X", 2)
    Z = _as_float_array(raw_Z, "raw_Z", 3)
    Y = _as_float_array(raw_Y, "raw_Y", 1)
    if X.shape[0] != Z.shape[0] or X.shape[0] != Y.shape[0]:
        raise DimensionMismatch("raw arrays have differing sample counts")
    if X.shape[0] < 2:
        raise ValidationError("need at least two samples to standardize")
    for name, a in (("raw_X", X), ("raw_Z", Z), ("raw_Y", Y)):
        if not np.all(np.isfinite(a)):
            raise ValidationError(f"{name} contains non-finite entries")
    means = X.mean(axis=0)
    sds = np.sqrt(np.mean(X * X, axis=0) - means**2)
    bad = np.flatnonzero(sds == 0.0)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    Xs = (X - means) / sds
    Zc = Z - Z.mean(axis=0)
    Yc = Y - Y.mean()
    return Dataset(Xs, Zc, Yc)


def _check_fit_args(data: Dataset, M, beta, B):
    M = np.asarray(M, dtype=np.intp).ravel()
    beta = np.asarray(beta, dtype=np.float64).ravel()
    B = np.asarray(B, dtype=np.float64)
    if M.size and (M.min() < 0 or M.max() >= data.s):
        raise DimensionMismatch("index set out of range")
    if beta.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"beta has {beta.shape[0]} entries for {M.shape[0]} indices")
    if B.shape != (data.p, data.q):
        raise DimensionMismatch(f"B must be {data.p}x{data.q}, got {B.shape}")
    return M, beta, B


def residuals(data: Dataset, M, beta, B) -> np.ndarray:
    """Signed residuals r_i = <beta, X_iM> + <B, Z_i> - Y_i."""
    M, beta, B = _check_fit_args(data, M, beta, B)
    r = data.z_matrix() @ B.ravel() - data.Y
    if M.size:
        r += data.X[:, M] @ beta
    return r


def objective(data: Dataset, M, beta, B, lambda1: float, lambda2: float) -> float:
    """Penalized loss (2n)^-1 sum r_i^2 + lambda1*||beta||_1 + lambda2*||B||_*."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValidationError("penalty weights must be nonnegative")
    M, beta, B = _check_fit_args(data, M, beta, B)
    r = residuals(data, M, beta, B)
    value = 0.5 * float(r @ r) / data.n
    if lambda1 > 0 and beta.size:
        value += lambda1 * float(np.abs(beta).sum())
    if lambda2 > 0:
        value += lambda2 * float(np.linalg.svd(B, compute_uv=False).sum())
    return value


def gradient(data: Dataset, M, beta, B):
    """Gradient of the smooth loss part at (beta, B).

    Returns ``(gbeta, gB)`` with gbeta_l = n^-1 sum_i X_il r_i and
    gB = n^-1 sum_i r_i Z_i.
    """
    M, beta, B = _check_fit_args(data, M, beta, B)
    r = residuals(data, M, beta, B)
    gbeta = data.X[:, M].T @ r / data.n if M.size else np.zeros(0)
    gB = (data.z_matrix().T @ r / data.n).reshape(data.p, data.q)
    return gbeta, gB
