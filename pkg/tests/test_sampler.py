"""Two-point sampler: kernel-level invariance, calibration, diagnostics."""
import math

import numpy as np
import pytest
import scipy.stats

from seqepi.sampler import (
    BLOW,
    HOP,
    KERNEL_PROBS,
    TRAVERSE,
    WALK,
    InitializationFailed,
    PosteriorSamples,
    default_move_prob,
    estimate_iat,
    run_mcmc,
    sample_initial_pair,
    twalk_move,
)


def std_normal_target(x):
    return -0.5 * float(np.dot(x, x))


class TestMoveProb:
    def test_default_subset_probability(self):
        assert default_move_prob(8) == 0.5
        assert default_move_prob(2) == 1.0
        assert default_move_prob(16) == 0.25

    def test_kernel_probs_sum_to_one(self):
        assert sum(KERNEL_PROBS) == pytest.approx(1.0)


class TestKernelInvariance:
    """One forced-kernel transition from an exact product-target sample must
    leave the marginal invariant and be statistically reversible.

    Any error in a kernel's Hastings correction (wrong centring, unmasked
    energy sums, stale scale on the reverse move) shifts the post-move
    marginal or breaks exchangeability of (before, after).
    """

    M = 100_000
    ALPHA = 0.01

    def _transitions(self, kernel, dim, pphi, seed):
        rng = np.random.default_rng(seed)
        before = rng.standard_normal((self.M, dim))
        helper = rng.standard_normal((self.M, dim))
        after = np.empty_like(before)
        for i in range(self.M):
            x, lpx, xp, lpxp, _ = twalk_move(
                rng, std_normal_target,
                before[i].copy(), std_normal_target(before[i]),
                helper[i].copy(), std_normal_target(helper[i]),
                pphi, kernel=kernel, update_primary=True,
            )
            after[i] = x
        return before, after

    @pytest.mark.parametrize("kernel,name", [
        (WALK, "walk"), (TRAVERSE, "traverse"), (BLOW, "blow"), (HOP, "hop"),
    ])
    @pytest.mark.parametrize("dim,pphi", [(2, 1.0), (4, 0.5)])
    def test_stationarity_and_reversibility(self, kernel, name, dim, pphi):
        before, after = self._transitions(kernel, dim, pphi, seed=1234 + kernel)
        for j in range(dim):
            # invariance: the post-move marginal is still standard normal
            ks = scipy.stats.kstest(after[:, j], "norm")
            assert ks.pvalue > self.ALPHA, f"{name} dim {j}: stationarity p={ks.pvalue:.4g}"
            # reversibility: (before, after) exchangeable => the asymmetric
            # statistic b*a^2 - b^2*a has zero mean
            t = before[:, j] * after[:, j] ** 2 - before[:, j] ** 2 * after[:, j]
            z = t.mean() / (t.std(ddof=1) / math.sqrt(self.M))
            assert abs(z) < 3.5, f"{name} dim {j}: reversibility z={z:.2f}"
            # and the jump distribution is symmetric about zero
            d = after[:, j] - before[:, j]
            moved = d[d != 0.0]
            if moved.size > 100:
                sign = scipy.stats.binomtest(int((moved > 0).sum()), moved.size, 0.5)
                assert sign.pvalue > self.ALPHA, f"{name} dim {j}: sign p={sign.pvalue:.4g}"

    def test_moves_actually_move(self):
        # sanity on the harness itself: each kernel accepts a healthy fraction
        for kernel in (WALK, TRAVERSE, BLOW, HOP):
            before, after = self._transitions(kernel, 2, 1.0, seed=99)
            frac = np.mean(np.any(before != after, axis=1))
            assert frac > 0.05, f"kernel {kernel} almost never moves"


class TestRunMcmc:
    def test_standard_gaussian_calibration(self):
        # the 5% variance window is ~2 sigma of estimator noise at 200k
        # iterations, so run longer than the minimum for stable margins
        dim = 8
        rng = np.random.default_rng(42)
        init_a = rng.standard_normal(dim)
        init_b = rng.standard_normal(dim)
        res = run_mcmc(std_normal_target, init_a, init_b,
                       iters=820_000, burn_in=20_000, thin=20, rng=rng)
        assert res.n_draws == 40_000
        for j in range(dim):
            col = res.draws[:, j]
            se = col.std(ddof=1) * math.sqrt(res.iat[j] / res.n_draws)
            assert abs(col.mean()) < 3.0 * se, f"coord {j} mean {col.mean():.4f} se {se:.4f}"
            assert col.var(ddof=1) == pytest.approx(1.0, abs=0.05), f"coord {j}"
        assert 0.05 < res.acceptance_rate < 0.6

    def test_support_constraint_respected(self):
        def half_space(x):
            if x[0] < 0.0:
                return -np.inf
            return -0.5 * float(np.dot(x, x))

        rng = np.random.default_rng(7)
        res = run_mcmc(half_space, np.array([0.5, 1.0]), np.array([1.5, -0.7]),
                       iters=20_000, burn_in=2_000, thin=10, rng=rng)
        assert np.all(res.draws[:, 0] >= 0.0)
        assert np.all(np.isfinite(res.log_posts))

    def test_seeded_determinism(self):
        a = run_mcmc(std_normal_target, np.array([0.1, 0.2]), np.array([1.0, -1.0]),
                     iters=5_000, burn_in=1_000, thin=5, rng=np.random.default_rng(3))
        b = run_mcmc(std_normal_target, np.array([0.1, 0.2]), np.array([1.0, -1.0]),
                     iters=5_000, burn_in=1_000, thin=5, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(a.draws, b.draws)
        assert a.acceptance_rate == b.acceptance_rate

    def test_draw_log_posts_match_target(self):
        rng = np.random.default_rng(11)
        res = run_mcmc(std_normal_target, np.array([0.1, 0.2]), np.array([1.0, -1.0]),
                       iters=3_000, burn_in=500, thin=5, rng=rng)
        recomputed = np.array([std_normal_target(v) for v in res.draws])
        np.testing.assert_allclose(res.log_posts, recomputed, atol=1e-12)

    def test_rejects_equal_coordinates(self):
        with pytest.raises(ValueError):
            run_mcmc(std_normal_target, np.array([0.5, 1.0]), np.array([0.5, 2.0]),
                     iters=100, burn_in=10, thin=1, rng=np.random.default_rng(0))

    def test_rejects_infinite_start(self):
        def target(x):
            return -np.inf
        with pytest.raises(InitializationFailed):
            run_mcmc(target, np.array([0.1, 0.2]), np.array([1.0, 2.0]),
                     iters=100, burn_in=10, thin=1, rng=np.random.default_rng(0))

    def test_iat_nan_for_short_chains(self):
        rng = np.random.default_rng(5)
        res = run_mcmc(std_normal_target, np.array([0.1, 0.2]), np.array([1.0, -1.0]),
                       iters=2_000, burn_in=1_000, thin=10, rng=rng)
        assert res.n_draws == 100
        assert np.all(np.isnan(res.iat))


class TestSampleInitialPair:
    def test_returns_distinct_finite_pair(self):
        rng = np.random.default_rng(8)
        a, lpa, b, lpb = sample_initial_pair(std_normal_target,
                                             lambda: rng.standard_normal(3))
        assert np.all(a != b)
        assert np.isfinite(lpa) and np.isfinite(lpb)

    def test_raises_when_target_never_finite(self):
        rng = np.random.default_rng(8)
        with pytest.raises(InitializationFailed):
            sample_initial_pair(lambda v: -np.inf,
                                lambda: rng.standard_normal(3), max_tries=50)


class TestPosteriorSamplesValidation:
    def test_rejects_non_finite_log_posts(self):
        with pytest.raises(ValueError):
            PosteriorSamples(draws=np.zeros((5, 2)),
                             log_posts=np.array([0.0, -np.inf, 0.0, 0.0, 0.0]),
                             acceptance_rate=0.3, iat=np.full(2, np.nan))


class TestEstimateIat:
    def test_iid_chain(self):
        rng = np.random.default_rng(21)
        assert estimate_iat(rng.standard_normal(50_000)) == pytest.approx(1.0, abs=0.2)

    def test_ar1_chain(self):
        rng = np.random.default_rng(22)
        rho = 0.9
        n = 400_000
        eps = rng.standard_normal(n)
        z = np.empty(n)
        z[0] = eps[0]
        for i in range(1, n):
            z[i] = rho * z[i - 1] + eps[i]
        want = (1.0 + rho) / (1.0 - rho)
        assert estimate_iat(z) == pytest.approx(want, rel=0.25)

    def test_constant_chain_raises(self):
        with pytest.raises(ValueError):
            estimate_iat(np.full(2000, 1.5))

    def test_short_chain_rejected(self):
        with pytest.raises(ValueError):
            estimate_iat(np.zeros(999))

    def test_at_least_one(self):
        # strong negative autocorrelation still reports IAT >= 1
        rng = np.random.default_rng(23)
        base = rng.standard_normal(10_000)
        chain = base * np.where(np.arange(10_000) % 2 == 0, 1.0, -1.0)
        assert estimate_iat(chain) >= 1.0
