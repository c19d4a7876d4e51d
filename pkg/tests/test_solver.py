import numpy as np
import pytest

from slrs import (
    Dataset,
    NoConvergence,
    SolverOptions,
    ValidationError,
    fit,
    gradient,
    objective,
    penalty_maxima,
    soft_threshold,
    standardize,
    step_size,
    svt,
)

from conftest import make_random_dataset


class TestSoftThreshold:
    def test_componentwise_formula(self):
        got = soft_threshold(np.array([3.0, -0.5, 1.0]), 1.0)
        np.testing.assert_array_equal(got, [2.0, 0.0, 0.0])

    def test_zero_lambda_is_identity(self):
        a = np.random.default_rng(0).standard_normal(7)
        np.testing.assert_array_equal(soft_threshold(a, 0.0), a)

    def test_thresholded_entries_exactly_zero(self):
        out = soft_threshold(np.array([0.3, -0.2, 0.9]), 0.5)
        assert out[0] == 0.0 and out[1] == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_scalar_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        a = float(rng.uniform(-3, 3))
        lam = float(rng.uniform(0, 2))
        grid = np.linspace(-4, 4, 160001)
        losses = 0.5 * (grid - a) ** 2 + lam * np.abs(grid)
        want = grid[np.argmin(losses)]
        got = soft_threshold(np.array([a]), lam)[0]
        assert got == pytest.approx(want, abs=1e-4)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValidationError):
            soft_threshold(np.ones(2), -0.1)

    def test_nonexpansive(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            a, b = rng.standard_normal(5), rng.standard_normal(5)
            lam = rng.uniform(0, 1.5)
            da = np.linalg.norm(soft_threshold(a, lam) - soft_threshold(b, lam))
            assert da <= np.linalg.norm(a - b) + 1e-12


class TestSvt:
    def test_diagonal(self):
        got = svt(np.diag([3.0, 1.0]), 2.0)
        np.testing.assert_allclose(got, np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_lambda_reproduces_input(self):
        A = np.random.default_rng(1).standard_normal((5, 4))
        np.testing.assert_allclose(svt(A, 0.0), A, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_beats_random_perturbations(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((5, 4))
        lam = 0.3

        def penalized(Bm):
            return 0.5 * np.sum((Bm - A) ** 2) + lam * np.linalg.svd(
                Bm, compute_uv=False
            ).sum()

        out = svt(A, lam)
        base = penalized(out)
        assert base <= penalized(np.zeros_like(A)) + 1e-12
        for _ in range(200):
            scale = rng.choice([1e-3, 1e-2, 1e-1])
            assert base <= penalized(out + scale * rng.standard_normal(A.shape)) + 1e-12

    def test_nonexpansive(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            A, B = rng.standard_normal((4, 6)), rng.standard_normal((4, 6))
            lam = rng.uniform(0, 1.0)
            d = np.linalg.norm(svt(A, lam) - svt(B, lam))
            assert d <= np.linalg.norm(A - B) + 1e-12


class TestStepSize:
    def test_orthogonal_design_gives_one(self):
        from scipy.linalg import hadamard

        H = hadamard(8).astype(float)
        X = H[:, 1:4]
        d = Dataset(X, np.zeros((8, 2, 2)), np.zeros(8))
        assert step_size(d, [0, 1, 2]) == pytest.approx(1.0, rel=1e-7)

    def test_single_standardized_column(self):
        rng = np.random.default_rng(3)
        tmp = standardize(rng.standard_normal((20, 1)), np.zeros((20, 2, 2)), np.zeros(20))
        d = Dataset(tmp.X, np.zeros((20, 2, 2)), np.zeros(20))
        assert step_size(d, [0]) == pytest.approx(1.0, rel=1e-7)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_dense_eigendecomposition(self, seed):
        d = make_random_dataset(n=30, s=6, p=3, q=4, seed=seed)
        M = np.array([0, 2, 4])
        Xnew = np.hstack([d.X[:, M], d.z_matrix()])
        lam_max = np.linalg.eigvalsh(Xnew.T @ Xnew)[-1]
        assert step_size(d, M) == pytest.approx(d.n / lam_max, rel=1e-8)

    def test_zero_design_rejected(self):
        rng = np.random.default_rng(5)
        tmp = standardize(rng.standard_normal((5, 2)), np.zeros((5, 2, 2)), np.zeros(5))
        with pytest.raises(ValidationError):
            step_size(tmp, [])  # empty M plus all-zero exposures


def ista_reference(d, M, lam1, lam2, iters):
    """Plain proximal-gradient loop, independently written."""
    M = np.asarray(M, dtype=np.intp)
    beta = np.zeros(M.size)
    B = np.zeros((d.p, d.q))
    delta = step_size(d, M)
    for _ in range(iters):
        gbeta, gB = gradient(d, M, beta, B)
        beta = soft_threshold(beta - delta * gbeta, delta * lam1)
        B = svt(B - delta * gB, delta * lam2)
    return beta, B


class TestFit:
    def test_zero_solution_at_penalty_maxima(self, signal_data):
        d = signal_data
        M = np.arange(5)
        lam1_max, lam2_max = penalty_maxima(d, M)
        res = fit(d, M, lam1_max, lam2_max)
        np.testing.assert_array_equal(res.beta, np.zeros(5))
        np.testing.assert_array_equal(res.B, np.zeros((d.p, d.q)))
        assert res.converged

    def test_unpenalized_matches_least_squares(self):
        d = make_random_dataset(n=60, s=8, p=4, q=4, seed=41, signal=True)
        M = np.array([0, 1, 2])
        Xnew = np.hstack([d.X[:, M], d.z_matrix()])
        theta, *_ = np.linalg.lstsq(Xnew, d.Y, rcond=None)
        res = fit(d, M, 0.0, 0.0, SolverOptions(max_iter=200000, rel_tol=1e-14))
        np.testing.assert_allclose(res.beta, theta[:3], atol=1e-5)
        np.testing.assert_allclose(res.B.ravel(), theta[3:], atol=1e-5)

    def test_matches_long_ista_run(self):
        d = make_random_dataset(n=100, s=12, p=8, q=8, seed=42, signal=True)
        M = np.arange(10)
        lam1 = lam2 = 0.1
        beta_ref, B_ref = ista_reference(d, M, lam1, lam2, 100_000)
        ref_obj = objective(d, M, beta_ref, B_ref, lam1, lam2)
        res = fit(d, M, lam1, lam2, SolverOptions(max_iter=20000, rel_tol=1e-12))
        assert res.objective == pytest.approx(ref_obj, abs=1e-6)

    def test_prox_fixed_point_at_convergence(self):
        d = make_random_dataset(n=80, s=10, p=5, q=6, seed=43, signal=True)
        M = np.arange(8)
        lam1, lam2 = 0.05, 0.08
        res = fit(d, M, lam1, lam2, SolverOptions(max_iter=50000, rel_tol=1e-12))
        delta = res.step_size
        gbeta, gB = gradient(d, M, res.beta, res.B)
        beta_star = soft_threshold(res.beta - delta * gbeta, delta * lam1)
        B_star = svt(res.B - delta * gB, delta * lam2)
        assert np.max(np.abs(res.beta - beta_star)) <= 1e-5
        assert np.linalg.norm(res.B - B_star) <= 1e-4 * (1 + np.linalg.norm(res.B))

    def test_empty_set_fits_exposure_only(self, signal_data):
        res = fit(signal_data, [], 0.0, 0.05)
        assert res.beta.size == 0
        assert res.converged
        assert np.linalg.norm(res.B) > 0

    def test_rank_nonincreasing_in_lambda2(self):
        d = make_random_dataset(n=60, s=8, p=6, q=6, seed=44, signal=True)
        M = np.arange(4)
        _, lam2_max = penalty_maxima(d, M)
        ranks = []
        for lam2 in np.geomspace(0.02 * lam2_max, lam2_max, 5):
            res = fit(d, M, 0.01, lam2)
            sv = np.linalg.svd(res.B, compute_uv=False)
            ranks.append(int((sv > 1e-10).sum()))
        assert all(a >= b for a, b in zip(ranks, ranks[1:]))

    def test_final_objective_not_above_initial(self, signal_data):
        d = signal_data
        M = np.arange(6)
        res = fit(d, M, 0.02, 0.02, SolverOptions(record_trace=True))
        assert res.objective <= res.objective_trace[0] + 1e-12

    def test_trace_length_matches_iterations(self, signal_data):
        res = fit(signal_data, np.arange(3), 0.05, 0.05, SolverOptions(record_trace=True))
        assert res.objective_trace.shape[0] == res.iterations + 1
        assert res.objective_trace[-1] == pytest.approx(res.objective, rel=1e-14)

    def test_non_convergence_still_returns(self, signal_data):
        res = fit(signal_data, np.arange(3), 0.01, 0.01,
                  SolverOptions(max_iter=3, rel_tol=1e-15))
        assert not res.converged
        assert res.iterations == 3

    def test_thresholded_coefficients_exactly_zero(self, signal_data):
        d = signal_data
        M = np.arange(d.s)
        lam1_max, _ = penalty_maxima(d, M)
        res = fit(d, M, 0.8 * lam1_max, 0.05)
        assert np.any(res.beta == 0.0)

    def test_beta_full_embedding(self, signal_data):
        res = fit(signal_data, [2, 5], 0.01, 0.01)
        full = res.beta_full(signal_data.s)
        assert full.shape == (signal_data.s,)
        assert full[2] == res.beta[0] and full[5] == res.beta[1]
        assert np.all(full[[0, 1, 3, 4]] == 0)

    def test_rejects_negative_penalties(self, signal_data):
        with pytest.raises(ValidationError):
            fit(signal_data, [0], -0.1, 0.0)

    def test_delta_override_matches(self, signal_data):
        M = np.arange(4)
        delta = step_size(signal_data, M)
        a = fit(signal_data, M, 0.02, 0.02)
        b = fit(signal_data, M, 0.02, 0.02, delta=delta)
        np.testing.assert_array_equal(a.beta, b.beta)
        np.testing.assert_array_equal(a.B, b.B)

    def test_unpenalized_subset_survives_heavy_l1(self, signal_data):
        d = signal_data
        M = np.arange(6)
        lam1_max, _ = penalty_maxima(d, M)
        res = fit(d, M, 2 * lam1_max, 0.05, unpenalized=[1, 4])
        assert np.all(res.beta[[0, 2, 3, 5]] == 0.0)
        assert np.all(res.beta[[1, 4]] != 0.0)

    def test_unpenalized_must_be_in_m(self, signal_data):
        with pytest.raises(ValidationError):
            fit(signal_data, [0, 1], 0.1, 0.1, unpenalized=[5])


class TestSolverOptions:
    def test_validation(self):
        with pytest.raises(ValidationError):
            SolverOptions(max_iter=0)
        with pytest.raises(ValidationError):
            SolverOptions(rel_tol=0.0)
