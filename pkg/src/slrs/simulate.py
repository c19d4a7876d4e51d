"""Scenario generators for the Monte Carlo studies.

Covariates come either from a stationary AR(1) Gaussian design
(correlation rho1^|l-l'|) or from an equicorrelated-block genotype design
(latent within-block correlation 0.4, trichotomized to {0,1,2} at
quantile thresholds driven by a per-column minor allele frequency).  The
exposure coefficient images are a centered plus sign (600 pixels at
0.0408) and a centered T (891 pixels at 0.0335), both approximately unit
Frobenius norm; exposures add a separable-correlation Gaussian noise
field and outcomes add iid Gaussian noise.

Every generator is a pure function of its arguments and a seed.  A
replicate r of a study with base seed b uses the integer seed
``replicate_seed(b, r)`` derived through numpy's SeedSequence; scenario
generation then splits its seed into four child streams (design, planted
LD block choice, exposure noise, outcome noise) in that fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .dataset import Dataset, GroundTruth
from .exceptions import (
    DimensionMismatch,
    PatternOverflow,
    SizeMismatch,
    TooSmall,
    ValidationError,
)
from .screening import BlockPartition

B_VALUE = 0.0408
C_VALUE = 0.0335
LD_BASE_BLOCK_SIZES = (2, 4, 6, 12, 24, 52)
LD_BLOCK_REPLICATION = 50

# planted indices, 0-based: confounders 0..2, precision 103..105,
# instrument triples from 206
_CONFOUNDERS = (0, 1, 2)
_PRECISION = (103, 104, 105)
_INSTRUMENT_START = 206
_BETA_TRIPLE = (3.0, 1.0, 1.0 / 3.0)
_V_CONFOUNDERS = (-1.0 / 3.0, -1.0, -3.0)
_V_INSTRUMENT_TRIPLE = (-3.0, -1.0, -1.0 / 3.0)
_LD_PRECISION_BETA = 0.25


@dataclass(frozen=True)
class LdConfig:
    """Equicorrelated-block genotype design parameters.

    ``block_sizes`` is the full multiset of block sizes (their sum must
    equal the covariate dimension); the block order is drawn at random for
    every run.  ``K`` selects the size of the planted weak-signal
    precision block (0 disables it).
    """

    block_sizes: tuple
    within_corr: float = 0.4
    maf_range: tuple = (0.05, 0.5)
    K: int = 0

    def __post_init__(self):
        sizes = tuple(int(b) for b in self.block_sizes)
        if not sizes or min(sizes) < 1:
            raise ValidationError("block sizes must be positive")
        if not 0 <= self.within_corr < 1:
            raise ValidationError("within_corr must be in [0, 1)")
        lo, hi = self.maf_range
        if not 0 < lo <= hi <= 0.5:
            raise ValidationError("maf_range must satisfy 0 < lo <= hi <= 0.5")
        if self.K and self.K not in sizes:
            raise ValidationError(f"no block of size K={self.K} in the layout")
        object.__setattr__(self, "block_sizes", sizes)

    @property
    def s(self) -> int:
        return sum(self.block_sizes)


def paper_ld_config(K: int = 0) -> LdConfig:
    """The 300-block layout: sizes 2,4,6,12,24,52 each replicated 50 times."""
    return LdConfig(block_sizes=LD_BASE_BLOCK_SIZES * LD_BLOCK_REPLICATION, K=K)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one simulated scenario."""

    n: int
    s: int = 5000
    p: int = 64
    q: int = 64
    rho1: float = 0.5
    rho2: float = 0.5
    sigma: float = 1.0
    sigma_e: float = 0.2
    instrument_triples: int = 1
    ld: LdConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        for name in ("rho1", "rho2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValidationError(f"{name} must be in [0, 1)")
        if self.sigma < 0 or self.sigma_e < 0:
            raise ValidationError("noise standard deviations must be nonnegative")
        if self.instrument_triples < 1:
            raise ValidationError("instrument_triples must be at least 1")
        span = _INSTRUMENT_START + 3 * self.instrument_triples
        if self.s < span:
            raise PatternOverflow(f"s={self.s} cannot host the planted pattern (needs {span})")
        if self.ld is not None and self.ld.s != self.s:
            raise SizeMismatch(f"block sizes sum to {self.ld.s}, expected s={self.s}")


@dataclass(frozen=True)
class Scenario:
    """One generated replicate: standardized data, truth and LD partition."""

    data: Dataset
    truth: GroundTruth
    partition: BlockPartition | None = None


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Documented (base seed, replicate id) -> integer seed split."""
    return int(np.random.SeedSequence((base_seed, replicate)).generate_state(1)[0])


def _scale_span(lo: int, hi: int, size: int, ref: int = 64) -> tuple[int, int]:
    # half-open [lo, hi) span scaled from the 64-pixel reference layout
    a = int(round(lo * size / ref))
    b = max(a + 1, int(round(hi * size / ref)))
    return a, b


def make_coefficient_images(p: int = 64, q: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Two-value coefficient images: a plus sign for B and a T for C.

    At the 64x64 reference size the plus sign covers exactly 600 pixels
    (bars 10 wide and 35 long) and the T exactly 891 pixels (top bar
    11 x 51, stem 11 x 30), making both images approximately unit
    Frobenius norm at values 0.0408 and 0.0335.  Other sizes scale the
    layout proportionally.
    """
    if p < 16 or q < 16:
        raise TooSmall("coefficient images need p, q >= 16")
    B = np.zeros((p, q))
    r0, r1 = _scale_span(27, 37, p)
    c0, c1 = _scale_span(15, 50, q)
    B[r0:r1, c0:c1] = B_VALUE
    r0, r1 = _scale_span(15, 50, p)
    c0, c1 = _scale_span(27, 37, q)
    B[r0:r1, c0:c1] = B_VALUE

    C = np.zeros((p, q))
    r0, r1 = _scale_span(12, 23, p)
    c0, c1 = _scale_span(7, 58, q)
    C[r0:r1, c0:c1] = C_VALUE
    r0, r1 = _scale_span(23, 53, p)
    c0, c1 = _scale_span(27, 38, q)
    C[r0:r1, c0:c1] = C_VALUE
    return B, C


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    means = X.mean(axis=0)
    sds = np.sqrt(np.mean(X * X, axis=0) - means**2)
    return (X - means) / sds


def gen_ar1_design(n: int, s: int, rho1: float, seed) -> np.ndarray:
    """Standardized design with rows iid N(0, Sigma), Sigma_ll' = rho1^|l-l'|.

    Uses the causal recursion x_l = rho1 x_{l-1} + sqrt(1-rho1^2) w_l, then
    standardizes every column (divisor-n sd).
    """
    if not 0 <= rho1 < 1:
        raise ValidationError("rho1 must be in [0, 1)")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, s))
    X = np.empty((n, s))
    X[:, 0] = W[:, 0]
    scale = np.sqrt(1.0 - rho1**2)
    for l in range(1, s):
        X[:, l] = rho1 * X[:, l - 1] + scale * W[:, l]
    return _standardize_columns(X)


def gen_ld_genotypes(n: int, ld: LdConfig, seed) -> tuple[np.ndarray, BlockPartition]:
    """Standardized {0,1,2} genotypes with equicorrelated latent blocks.

    Per run the block-size multiset is laid out in a random order.  Within
    a block the latent Gaussian has unit variance and covariance
    ``within_corr``; each column draws MAF ~ Uniform(maf_range) and is cut
    at d1 = ndtri(1 - 6 MAF / 5), d2 = ndtri(1 - 2 MAF / 5) into
    {0, 1, 2}.  A column that comes out constant (possible at small n and
    extreme MAF) redraws its own idiosyncratic noise and MAF; the shared
    block component is kept so the block correlation is unaffected.
    """
    rng = np.random.default_rng(seed)
    sizes = np.asarray(ld.block_sizes, dtype=np.intp)
    order = rng.permutation(sizes.size)
    sizes = sizes[order]
    s = int(sizes.sum())
    rho = ld.within_corr
    lo, hi = ld.maf_range

    X = np.empty((n, s))
    start = 0
    for size in sizes:
        common = rng.standard_normal(n)
        for j in range(start, start + size):
            while True:
                latent = np.sqrt(rho) * common + np.sqrt(1.0 - rho) * rng.standard_normal(n)
                maf = rng.uniform(lo, hi)
                d1 = ndtri(1.0 - 6.0 * maf / 5.0)
                d2 = ndtri(1.0 - 2.0 * maf / 5.0)
                g = (latent >= d1).astype(np.float64) + (latent > d2)
                if g.min() != g.max():
                    X[:, j] = g
                    break
        start += size
    partition = BlockPartition.from_sizes(sizes)
    return _standardize_columns(X), partition


def plant_truth(config: ScenarioConfig, p_ld=None, images=None) -> GroundTruth:
    """Planted coefficient pattern and the derived variable classification.

    Outcome coefficients: (3, 1, 1/3) on covariates 0..2 and 103..105
    (0-based), 1/4 on the planted LD precision block if given.  Exposure
    images: C_l = v_l * C with v = (-1/3, -1, -3) on 0..2 and the triple
    (-3, -1, -1/3) repeated ``instrument_triples`` times from 206.
    ``images`` overrides the default (B, C) pair.
    """
    s = config.s
    B, C = images if images is not None else make_coefficient_images(config.p, config.q)
    if B.shape != (config.p, config.q) or C.shape != (config.p, config.q):
        raise DimensionMismatch("coefficient images must be p x q")
    beta = np.zeros(s)
    beta[list(_CONFOUNDERS)] = _BETA_TRIPLE
    beta[list(_PRECISION)] = _BETA_TRIPLE
    v = np.zeros(s)
    v[list(_CONFOUNDERS)] = _V_CONFOUNDERS
    for t in range(config.instrument_triples):
        lo = _INSTRUMENT_START + 3 * t
        v[lo:lo + 3] = _V_INSTRUMENT_TRIPLE
    if p_ld is not None:
        p_ld = np.asarray(p_ld, dtype=np.intp).ravel()
        span = _INSTRUMENT_START + 3 * config.instrument_triples
        if p_ld.size and p_ld.min() < span:
            raise PatternOverflow("planted LD precision block collides with the base pattern")
        if beta[p_ld].any() or v[p_ld].any():
            raise PatternOverflow("planted LD precision block overlaps other signals")
        beta[p_ld] = _LD_PRECISION_BETA

    has_beta = beta != 0.0
    has_img = v != 0.0
    return GroundTruth(
        beta_star=beta,
        exposure_images={int(l): v[l] * C for l in np.flatnonzero(has_img)},
        B=B,
        confounders=np.flatnonzero(has_beta & has_img),
        precision=np.flatnonzero(has_beta & ~has_img),
        instruments=np.flatnonzero(~has_beta & has_img),
        irrelevant=np.flatnonzero(~has_beta & ~has_img),
        sigma=config.sigma,
        sigma_e=config.sigma_e,
        rho1=config.rho1,
        rho2=config.rho2,
    )


def _ar1_cholesky(size: int, rho: float) -> np.ndarray:
    idx = np.arange(size)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(corr)


def gen_exposures(X: np.ndarray, truth: GroundTruth, rho2: float, sigma_e: float,
                  seed) -> np.ndarray:
    """Exposure stack Z_i = sum_l X_il C_l + E_i (uncentered).

    The noise field E has pixel sd ``sigma_e`` and separable correlation
    rho2^(|j-j'| + |k-k'|), realized as sigma_e * A_p W A_q' with W iid
    standard normal and A_p, A_q Cholesky factors of the 1D AR(1)
    correlation matrices.
    """
    if not 0 <= rho2 < 1:
        raise ValidationError("rho2 must be in [0, 1)")
    n = X.shape[0]
    p, q = truth.B.shape
    rng = np.random.default_rng(seed)
    Z = sigma_e * rng.standard_normal((n, p, q))
    if rho2 > 0:
        Ap = _ar1_cholesky(p, rho2)
        Aq = _ar1_cholesky(q, rho2)
        Z = np.matmul(Ap, Z) @ Aq.T
    if truth.exposure_images:
        nz = sorted(truth.exposure_images)
        stack = np.stack([truth.exposure_images[l] for l in nz])
        Z += np.tensordot(X[:, nz], stack, axes=(1, 0))
    return Z


def gen_outcomes(X: np.ndarray, Z: np.ndarray, truth: GroundTruth, sigma: float,
                 seed) -> np.ndarray:
    """Centered outcomes Y_i = sum_l X_il beta_l + <Z_i, B> + eps_i."""
    if X.shape[0] != Z.shape[0]:
        raise DimensionMismatch("X and Z sample counts disagree")
    if X.shape[1] != truth.beta_star.shape[0] or Z.shape[1:] != truth.B.shape:
        raise DimensionMismatch("truth does not match the data dimensions")
    rng = np.random.default_rng(seed)
    y = X @ truth.beta_star
    y += np.tensordot(Z, truth.B, axes=([1, 2], [0, 1]))
    y += sigma * rng.standard_normal(X.shape[0])
    return y - y.mean()


def _choose_ld_precision_block(partition: BlockPartition, K: int, span: int,
                               seed) -> np.ndarray:
    eligible = [b for b in partition.blocks if b.size == K and b.min() >= span]
    if not eligible:
        raise PatternOverflow(f"no block of size {K} fits beyond the planted pattern")
    rng = np.random.default_rng(seed)
    return eligible[int(rng.integers(len(eligible)))]


def make_scenario(config: ScenarioConfig, images=None) -> Scenario:
    """Generate one full replicate: design, truth, exposures and outcomes."""
    children = np.random.SeedSequence(config.seed).spawn(4)
    design_seed, pld_seed, exposure_seed, outcome_seed = children
    partition = None
    p_ld = None
    if config.ld is not None:
        X, partition = gen_ld_genotypes(config.n, config.ld, design_seed)
        if config.ld.K:
            span = _INSTRUMENT_START + 3 * config.instrument_triples
            p_ld = _choose_ld_precision_block(partition, config.ld.K, span, pld_seed)
    else:
        X = gen_ar1_design(config.n, config.s, config.rho1, design_seed)
    truth = plant_truth(config, p_ld=p_ld, images=images)
    Z = gen_exposures(X, truth, config.rho2, config.sigma_e, exposure_seed)
    Y = gen_outcomes(X, Z, truth, config.sigma, outcome_seed)
    data = Dataset(X, Z - Z.mean(axis=0), Y)
    return Scenario(data=data, truth=truth, partition=partition)


def scenario_with_seed(config: ScenarioConfig, base_seed: int, replicate: int) -> ScenarioConfig:
    """Configuration for one replicate of a study."""
    return replace(config, seed=replicate_seed(base_seed, replicate))
