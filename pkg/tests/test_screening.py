import numpy as np
import pytest

from slrs import (
    BadK,
    BadMethod,
    BadTarget,
    BlockPartition,
    Dataset,
    NoConvergence,
    ScreenScores,
    ValidationError,
    block_average,
    blockwise_screen,
    coverage_from_scores,
    default_target,
    joint_screen,
    joint_screen_ratio,
    marginal_exposure_scores,
    marginal_outcome_scores,
    operator_norm,
    screen,
    screen_scores,
    select_top_k,
    standardize,
)
from slrs.screening import (
    blockwise_screen_from_scores,
    intersection_screen_from_scores,
    joint_screen_from_scores,
    outcome_screen_from_scores,
)

from conftest import make_random_dataset


class TestOutcomeScores:
    def test_zero_outcome_gives_zero_scores(self, small_data):
        d = Dataset(small_data.X, small_data.Z, np.zeros(small_data.n))
        np.testing.assert_array_equal(marginal_outcome_scores(d), np.zeros(d.s))

    def test_two_sample_closed_form(self):
        X = np.array([[1.0], [-1.0]])
        Y = np.array([2.0, -2.0])
        d = Dataset(X, np.zeros((2, 1, 1)), Y)
        assert marginal_outcome_scores(d)[0] == pytest.approx(2.0, abs=1e-15)

    def test_matches_double_loop(self):
        d = make_random_dataset(n=50, s=20, p=3, q=3, seed=2, signal=True)
        scores = marginal_outcome_scores(d)
        for l in range(d.s):
            acc = 0.0
            for i in range(d.n):
                acc += d.X[i, l] * d.Y[i]
            assert scores[l] == pytest.approx(abs(acc) / d.n, abs=1e-12)


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm(np.eye(2)) == pytest.approx(1.0, rel=1e-8)

    def test_diagonal(self):
        assert operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_svd(self, seed):
        A = np.random.default_rng(seed).standard_normal((7, 5))
        want = np.linalg.svd(A, compute_uv=False)[0]
        assert operator_norm(A) == pytest.approx(want, rel=1e-8)

    def test_zero_matrix(self):
        assert operator_norm(np.zeros((4, 3))) == 0.0

    def test_no_convergence_raises_without_fallback(self):
        A = np.random.default_rng(1).standard_normal((6, 6))
        with pytest.raises(NoConvergence):
            operator_norm(A, max_iter=1, svd_fallback=False)

    def test_fallback_matches_svd(self):
        A = np.random.default_rng(1).standard_normal((6, 6))
        want = np.linalg.svd(A, compute_uv=False)[0]
        assert operator_norm(A, max_iter=1) == pytest.approx(want, rel=1e-12)


class TestExposureScores:
    def test_zero_exposures(self, small_data):
        d = Dataset(small_data.X, np.zeros_like(small_data.Z), small_data.Y)
        np.testing.assert_array_equal(marginal_exposure_scores(d), np.zeros(d.s))

    def test_rank_one_all_ones_image(self):
        rng = np.random.default_rng(4)
        n, p, q = 80, 3, 5
        raw = rng.standard_normal((n, 2))
        tmp = standardize(raw, np.zeros((n, p, q)), np.zeros(n))
        J = np.ones((p, q))
        Z = tmp.X[:, 0, None, None] * J
        d = Dataset(tmp.X, Z - Z.mean(axis=0), np.zeros(n))
        scores = marginal_exposure_scores(d)
        # column 0 drives every pixel: score is ||J||_op = sqrt(p*q)
        assert scores[0] == pytest.approx(np.sqrt(p * q), rel=1e-6)

    def test_matches_bruteforce_svd(self):
        d = make_random_dataset(n=40, s=10, p=6, q=8, seed=5, signal=True)
        scores = marginal_exposure_scores(d)
        for l in range(d.s):
            C = np.zeros((d.p, d.q))
            for i in range(d.n):
                C += d.X[i, l] * d.Z[i]
            C /= d.n
            want = np.linalg.svd(C, compute_uv=False)[0]
            assert scores[l] == pytest.approx(want, rel=1e-8, abs=1e-12)


class TestBlockAverage:
    def test_constant_scores_single_block(self):
        part = BlockPartition.from_sizes([6])
        np.testing.assert_allclose(block_average(np.full(6, 3.3), part), np.full(6, 3.3))

    def test_two_blocks(self):
        part = BlockPartition((np.array([0, 1]), np.array([2])))
        np.testing.assert_allclose(
            block_average(np.array([1.0, 3.0, 5.0]), part), [2.0, 2.0, 5.0]
        )

    def test_matches_per_block_loop(self):
        rng = np.random.default_rng(9)
        sizes = [3, 1, 4, 2]
        part = BlockPartition.from_sizes(sizes)
        scores = rng.standard_normal(10)
        got = block_average(scores, part)
        for block in part.blocks:
            want = scores[block].mean()
            for l in block:
                assert got[l] == pytest.approx(want, rel=1e-14)

    def test_idempotent(self):
        rng = np.random.default_rng(10)
        part = BlockPartition.from_sizes([4, 5, 1])
        scores = rng.standard_normal(10)
        once = block_average(scores, part)
        np.testing.assert_array_equal(block_average(once, part), once)

    def test_partition_validation(self):
        with pytest.raises(ValidationError):
            BlockPartition((np.array([0, 1]), np.array([1, 2])))
        with pytest.raises(ValidationError):
            BlockPartition((np.array([0]), np.array([2])))
        with pytest.raises(ValidationError):
            BlockPartition((np.array([0]), np.array([], dtype=int)))


class TestSelectTopK:
    def test_ties_keep_both_tied_values(self):
        chosen, thr = select_top_k(np.array([0.5, 0.9, 0.9]), 2)
        np.testing.assert_array_equal(chosen, [1, 2])
        assert thr == 0.9

    def test_all_tied_breaks_by_index(self):
        chosen, _ = select_top_k(np.array([1.0, 1.0, 1.0]), 1)
        np.testing.assert_array_equal(chosen, [0])

    def test_matches_full_sort(self):
        rng = np.random.default_rng(11)
        scores = rng.random(30)
        chosen, thr = select_top_k(scores, 5)
        want = np.sort(np.argsort(-scores, kind="stable")[:5])
        np.testing.assert_array_equal(chosen, want)
        assert thr == scores[chosen].min()

    def test_bad_k(self):
        with pytest.raises(BadK):
            select_top_k(np.ones(3), 0)
        with pytest.raises(BadK):
            select_top_k(np.ones(3), 4)


def scores_from_vectors(outcome, exposure, block_outcome=None, block_exposure=None):
    return ScreenScores(
        np.asarray(outcome, dtype=float),
        np.asarray(exposure, dtype=float),
        None if block_outcome is None else np.asarray(block_outcome, dtype=float),
        None if block_exposure is None else np.asarray(block_exposure, dtype=float),
    )


class TestJointScreen:
    def test_identical_rankings_need_k_equal_target(self):
        v = np.linspace(1, 0.1, 10)
        res = joint_screen_from_scores(scores_from_vectors(v, v), target=4)
        assert res.k == 4
        assert res.selected.size == 4

    def test_disjoint_rankings_need_half(self):
        outcome = np.array([5.0, 4.0, 3.0, 0.0, 0.0, 0.0])
        exposure = np.array([0.0, 0.0, 0.0, 5.0, 4.0, 3.0])
        res = joint_screen_from_scores(scores_from_vectors(outcome, exposure), target=6)
        assert res.k == 3
        assert res.selected.size == 6

    def test_default_target_formula(self):
        assert default_target(566) == 89
        assert default_target(200) == 37
        assert default_target(500) == 80

    def test_default_target_used(self, signal_data):
        res = joint_screen(signal_data)
        assert res.target_size == default_target(signal_data.n)

    def test_component_sizes_equal(self, signal_data):
        res = joint_screen(signal_data, target=8)
        assert res.k_exposure == res.k
        assert res.selected.size >= 8

    def test_selected_attain_thresholds(self, signal_data):
        res = joint_screen(signal_data, target=8)
        sc = res.scores
        for l in res.selected:
            assert (
                sc.outcome_scores[l] >= res.thresholds["gamma1"]
                or sc.exposure_scores[l] >= res.thresholds["gamma2"]
            )

    def test_bad_target(self, small_data):
        with pytest.raises(BadTarget):
            joint_screen(small_data, target=small_data.s + 1)
        with pytest.raises(BadTarget):
            joint_screen(small_data, target=0)


class TestJointScreenRatio:
    def test_ratio_one_matches_joint(self, signal_data):
        a = joint_screen(signal_data, target=7)
        b = joint_screen_ratio(signal_data, 7, 1.0)
        np.testing.assert_array_equal(a.selected, b.selected)
        assert a.k == b.k

    def test_ratio_two_growth_schedule(self):
        # disjoint rankings: 9 covariates needed -> k1=3, k2=6
        outcome = np.array([9.0, 8, 7, 6, 5, 0, 0, 0, 0, 0, 0, 0])
        exposure = np.array([0.0, 0, 0, 0, 0, 9, 8, 7, 6, 5, 4, 3])
        res = joint_screen_from_scores(scores_from_vectors(outcome, exposure),
                                       target=9, ratio=2.0)
        assert res.k == 3
        assert res.k_exposure == 6
        assert res.selected.size == 9

    def test_half_ratio_mirrors_double(self):
        rng = np.random.default_rng(21)
        a = rng.random(40)
        b = rng.random(40)
        res_double = joint_screen_from_scores(scores_from_vectors(a, b), 15, 2.0)
        res_half = joint_screen_from_scores(scores_from_vectors(b, a), 15, 0.5)
        # swapping the score roles swaps the component sizes at the stop point
        assert res_double.selected.size == res_half.selected.size
        np.testing.assert_array_equal(res_double.selected, res_half.selected)
        assert res_half.k == res_double.k_exposure
        assert res_half.k_exposure == res_double.k

    def test_bad_ratio(self, small_data):
        with pytest.raises(ValidationError):
            joint_screen_ratio(small_data, 4, 0.0)


class TestBlockwiseScreen:
    def test_single_block_degenerates(self, signal_data):
        part = BlockPartition.from_sizes([signal_data.s])
        res = blockwise_screen(signal_data, part, target=6)
        assert res.selected.size >= 6
        # block scores are constant, so the block components are tie-broken prefixes
        np.testing.assert_allclose(
            res.scores.block_outcome_scores,
            np.full(signal_data.s, res.scores.outcome_scores.mean()),
        )

    def test_default_target_doubles(self):
        d = make_random_dataset(n=30, s=20, p=3, q=3, seed=8, signal=True)
        part = BlockPartition.from_sizes([5, 15])
        res = blockwise_screen(d, part)
        assert res.target_size == 2 * default_target(d.n)

    def test_weak_block_rescued_by_block_scores(self):
        # block 17..20 holds four individually weak covariates with a high
        # block mean; competitors are strong singletons plus blocks whose
        # means are diluted by null members
        outcome = np.zeros(47)
        outcome[0], outcome[1] = 4.5, 4.4          # strong pair inside a 17-block
        weak_block = [17, 18, 19, 20]
        outcome[weak_block] = [1.0, 1.2, 1.1, 0.9]  # mean 1.05
        for j in range(6):                          # 4-blocks: one 3.5, three nulls
            outcome[21 + 4 * j] = 3.5
        outcome[45], outcome[46] = 4.0, 3.9         # singletons
        exposure = outcome.copy()
        part = BlockPartition.from_sizes([17, 4] + [4] * 6 + [1, 1])
        sc = screen_scores_like(outcome, exposure, part)
        res = blockwise_screen_from_scores(sc, target=10)
        assert res.k == 6
        # all four weak covariates enter, via the block-outcome component only
        assert set(weak_block) <= set(res.selected.tolist())
        top_block, _ = select_top_k(sc.block_outcome_scores, res.k)
        assert set(weak_block) <= set(top_block.tolist())
        top_indiv, cut = select_top_k(sc.outcome_scores, res.k)
        assert set(weak_block).isdisjoint(top_indiv.tolist())
        assert np.all(outcome[weak_block] < cut)

    def test_union_contains_joint_at_shared_k(self, signal_data):
        part = BlockPartition.from_sizes([3, 5, 7])
        res = blockwise_screen(signal_data, part, target=8)
        k = res.k
        sc = res.scores
        top1, _ = select_top_k(sc.outcome_scores, k)
        top2, _ = select_top_k(sc.exposure_scores, k)
        assert set(top1) | set(top2) <= set(res.selected.tolist())


def screen_scores_like(outcome, exposure, part):
    outcome = np.asarray(outcome, dtype=float)
    exposure = np.asarray(exposure, dtype=float)
    return ScreenScores(outcome, exposure,
                        block_average(outcome, part), block_average(exposure, part))


class TestScreenDispatch:
    def test_unknown_method(self, small_data):
        with pytest.raises(BadMethod):
            screen(small_data, method="magic", target=3)

    def test_blockwise_needs_partition(self, small_data):
        with pytest.raises(ValidationError):
            screen(small_data, method="blockwise", target=3)

    def test_outcome_method_is_plain_top_k(self, signal_data):
        res = screen(signal_data, method="outcome", target=5)
        want, _ = select_top_k(marginal_outcome_scores(signal_data), 5)
        np.testing.assert_array_equal(res.selected, want)

    def test_intersection_sizes_equal_and_reaches_target(self, signal_data):
        res = screen(signal_data, method="intersection", target=4)
        assert res.selected.size >= 4
        sc = res.scores
        top1, _ = select_top_k(sc.outcome_scores, res.k)
        top2, _ = select_top_k(sc.exposure_scores, res.k)
        np.testing.assert_array_equal(res.selected, np.intersect1d(top1, top2))


class TestScaleInvariance:
    def test_outcome_scaling(self, signal_data):
        d = signal_data
        scores = marginal_outcome_scores(d)
        scaled = Dataset(d.X, d.Z, 3.7 * d.Y, validate=False)
        np.testing.assert_allclose(
            marginal_outcome_scores(scaled), 3.7 * scores, rtol=1e-13
        )
        a, _ = select_top_k(scores, 4)
        b, _ = select_top_k(3.7 * scores, 4)
        np.testing.assert_array_equal(a, b)

    def test_exposure_scaling(self, signal_data):
        d = signal_data
        scores = marginal_exposure_scores(d)
        scaled = Dataset(d.X, 2.5 * d.Z, d.Y, validate=False)
        np.testing.assert_allclose(
            marginal_exposure_scores(scaled), 2.5 * scores, rtol=1e-7
        )


class TestBiasCancellation:
    def test_orthogonal_noise_free_scores_equal_bias(self):
        # orthogonal +/-1 design (Hadamard columns, the all-ones one dropped)
        from scipy.linalg import hadamard

        H = hadamard(8).astype(float)
        X = H[:, 1:5]
        n, s, p, q = 8, 4, 3, 3
        rng = np.random.default_rng(23)
        B = rng.standard_normal((p, q))
        C_img = rng.standard_normal((p, q))
        v = np.array([1.0, -0.5, 0.0, 2.0])
        beta = np.array([0.4, 0.1, 0.7, 0.0])
        beta[3] = -v[3] * float((C_img * B).sum())  # exact cancellation
        Z = X[:, :, None, None][:, 0] * 0.0
        Z = np.zeros((n, p, q))
        for l in range(s):
            Z += X[:, l, None, None] * (v[l] * C_img)
        Y = X @ beta + Z.reshape(n, -1) @ B.ravel()
        d = Dataset(X, Z, Y)
        scores = marginal_outcome_scores(d)
        expect = np.abs(beta + v * float((C_img * B).sum()))
        np.testing.assert_allclose(scores, expect, atol=1e-12)
        assert scores[3] <= 1e-12


class TestCoverage:
    def test_superset_coverage_is_one(self):
        outcome = np.array([9.0, 8.0, 0.1, 0.2, 0.3])
        exposure = np.array([9.0, 8.0, 0.3, 0.2, 0.1])
        curves = coverage_from_scores(
            [scores_from_vectors(outcome, exposure)], [np.array([0, 1])],
            "joint", sizes=np.arange(2, 6),
        )
        np.testing.assert_allclose(curves.overall, 1.0)

    def test_intersection_never_sees_exposure_only_zero(self):
        # pure precision covariate (index 2): top-3 outcome score but the
        # smallest exposure score, so it never enters the exposure top list
        rng = np.random.default_rng(31)
        s = 40
        outcome = rng.uniform(0.5, 1.0, s)
        outcome[2] = 2.0
        exposure = rng.uniform(0.5, 1.0, s)
        exposure[2] = 0.0
        curves = coverage_from_scores(
            [scores_from_vectors(outcome, exposure)], [np.array([2])],
            "intersection", sizes=np.arange(1, 11),
        )
        np.testing.assert_allclose(curves.overall, 0.0)

    def test_linear_interpolation_between_attained_sizes(self):
        # joint sizes attained: 2, 4 -> size 3 is the midpoint
        outcome = np.array([9.0, 8.0, 1.0, 0.5, 0.2, 0.1])
        exposure = np.array([0.1, 0.2, 0.5, 1.0, 8.0, 9.0])
        m1 = np.array([1, 4])
        curves = coverage_from_scores(
            [scores_from_vectors(outcome, exposure)], [m1],
            "joint", sizes=np.array([2, 3, 4]),
        )
        # k=1: {0, 5} covers neither of m1 fully -> overall 0.0? index 4 not in;
        # k=2: {0, 1, 4, 5} covers both -> 1.0; size jumps 2 -> 4
        np.testing.assert_allclose(curves.overall, [0.0, 0.5, 1.0])

    def test_outcome_method_exact_sizes(self):
        outcome = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
        exposure = np.zeros(5)
        curves = coverage_from_scores(
            [scores_from_vectors(outcome, exposure)], [np.array([2])],
            "outcome", sizes=np.arange(1, 6),
        )
        np.testing.assert_allclose(curves.overall, [0.0, 0.0, 1.0, 1.0, 1.0])

    def test_bad_method(self):
        with pytest.raises(BadMethod):
            coverage_from_scores([], [], "magic", np.array([1.0]))
