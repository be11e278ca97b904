import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rater_infer import dists
from rater_infer.errors import BadParameter

KS_ALPHA = 1e-3


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class TestSamplers:
    def test_normal_degenerate_variance(self, rng):
        x = dists.sample_normal(3.0, 1e-12, rng, size=100_000)
        assert x.std() < 1e-5
        np.testing.assert_allclose(x.mean(), 3.0, atol=1e-6)

    def test_normal_rejects_nonpositive_variance(self, rng):
        with pytest.raises(BadParameter):
            dists.sample_normal(0.0, 0.0, rng)

    def test_gamma_exponential_mean(self, rng):
        x = dists.sample_gamma(1.0, 1.0, rng, size=1_000_000)
        assert abs(x.mean() - 1.0) < 0.003

    def test_gamma_reliability_mean(self, rng):
        x = dists.sample_gamma(10.0, 10.0 / 0.15, rng, size=1_000_000)
        assert abs(x.mean() - 0.15) < 0.001

    @pytest.mark.parametrize("shape, rate", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
    def test_gamma_rejects_bad_parameters(self, rng, shape, rate):
        with pytest.raises(BadParameter):
            dists.sample_gamma(shape, rate, rng)

    def test_inv_gamma_ks(self, rng):
        x = dists.sample_inv_gamma(3.0, 2.0, rng, size=20_000)
        assert stats.kstest(x, stats.invgamma(3.0, scale=2.0).cdf).pvalue > KS_ALPHA

    def test_beta_uniform_mean(self, rng):
        assert abs(dists.sample_beta(1.0, 1.0, rng, size=1_000_000).mean() - 0.5) < 0.002

    def test_beta_extreme(self, rng):
        assert np.all(dists.sample_beta(1.0, 1e6, rng, size=10_000) < 1e-4)

    def test_beta_mean(self, rng):
        assert abs(dists.sample_beta(4.0, 3.0, rng, size=1_000_000).mean() - 4 / 7) < 0.002

    def test_beta_rejects_zero(self, rng):
        with pytest.raises(BadParameter):
            dists.sample_beta(0.0, 1.0, rng)

    @pytest.mark.parametrize(
        "sampler, args, ref",
        [
            (dists.sample_normal, (2.0, 4.0), stats.norm(2.0, 2.0)),
            (dists.sample_gamma, (3.0, 2.0), stats.gamma(3.0, scale=0.5)),
            (dists.sample_beta, (2.0, 5.0), stats.beta(2.0, 5.0)),
        ],
    )
    def test_ks(self, rng, sampler, args, ref):
        x = sampler(*args, rng, size=20_000)
        assert stats.kstest(x, ref.cdf).pvalue > KS_ALPHA


class TestCategorical:
    def test_point_mass(self, rng):
        assert all(dists.sample_categorical([1, 0, 0], rng) == 0 for _ in range(200))

    def test_fair_coin(self, rng):
        w = np.tile([1.0, 1.0], (100_000, 1))
        assert abs(dists.sample_categorical(w, rng).mean() - 0.5) < 0.005

    def test_frequencies(self, rng):
        p = np.array([0.3, 0.14, 0.56])
        draws = dists.sample_categorical(np.tile(p, (100_000, 1)), rng)
        np.testing.assert_allclose(np.bincount(draws, minlength=3) / draws.size, p, atol=0.01)

    def test_all_zero_rejected(self, rng):
        with pytest.raises(BadParameter):
            dists.sample_categorical([0.0, 0.0], rng)

    def test_log_weights_never_pick_minus_inf(self, rng):
        lw = np.tile([-np.inf, 0.0, -np.inf], (1000, 1))
        assert np.all(dists.sample_categorical_log(lw, rng) == 1)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8).filter(lambda w: sum(w) > 0))
    def test_never_returns_zero_weight(self, w):
        g = np.random.default_rng(0)
        idx = dists.sample_categorical(np.tile(w, (200, 1)), g)
        assert np.all(np.asarray(w)[idx] > 0)


class TestTruncatedNormal:
    def test_untruncated(self, rng):
        x = dists.sample_truncated_normal(0.0, 1.0, -np.inf, np.inf, rng, size=20_000)
        assert stats.kstest(x, stats.norm.cdf).pvalue > KS_ALPHA

    def test_half_normal_mean(self, rng):
        x = dists.sample_truncated_normal(0.0, 1.0, 0.0, np.inf, rng, size=1_000_000)
        assert abs(x.mean() - np.sqrt(2 / np.pi)) < 0.003
        assert np.all(x > 0)

    def test_symmetric_window(self, rng):
        x = dists.sample_truncated_normal(0.0, 1.0, -1.0, 1.0, rng, size=1_000_000)
        assert np.all((x > -1) & (x <= 1))
        assert abs(x.mean()) < 0.003

    @pytest.mark.parametrize("lo, hi", [(-0.5, 2.0), (3.0, 4.0), (7.0, np.inf), (-np.inf, -8.0), (10.0, 10.5)])
    def test_ks_against_scipy(self, rng, lo, hi):
        x = dists.sample_truncated_normal(0.0, 1.0, lo, hi, rng, size=20_000)
        assert np.all((x > lo) & (x <= hi))
        ref = stats.truncnorm(lo, hi)
        assert stats.kstest(x, ref.cdf).pvalue > KS_ALPHA

    def test_bad_bounds(self, rng):
        with pytest.raises(BadParameter):
            dists.sample_truncated_normal(0.0, 1.0, 1.0, 1.0, rng)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-50, 50),
        st.floats(0.01, 100),
        st.floats(-60, 60),
        st.floats(1e-3, 30),
    )
    def test_draws_inside_interval(self, mean, var, lo, width):
        g = np.random.default_rng(1)
        x = dists.sample_truncated_normal(mean, var, lo, lo + width, g, size=50)
        assert np.all((x > lo) & (x <= lo + width))


class TestLogDensity:
    def test_values(self):
        np.testing.assert_allclose(dists.log_density("normal", (0.0, 1.0), 0.0), -0.9189385332, rtol=1e-9)
        np.testing.assert_allclose(dists.log_density("gamma", (1.0, 1.0), 1.0), -1.0, rtol=1e-12)
        assert dists.log_density("inv_gamma", (2.0, 2.0), 0.0) == -np.inf
        assert dists.log_density("inv_gamma", (2.0, 2.0), -1.0) == -np.inf

    @pytest.mark.parametrize(
        "kind, params, lo, hi",
        [
            ("normal", (1.0, 4.0), -np.inf, np.inf),
            ("gamma", (2.5, 0.7), 0, np.inf),
            ("inv_gamma", (3.0, 2.0), 0, np.inf),
            ("beta", (2.0, 3.0), 0, 1),
        ],
    )
    def test_integrates_to_one(self, kind, params, lo, hi):
        val = integrate.quad(lambda x: np.exp(dists.log_density(kind, params, x)), lo, hi, epsabs=1e-12)[0]
        assert abs(val - 1.0) < 1e-6

    def test_matches_scipy(self):
        x = np.linspace(0.05, 5, 30)
        np.testing.assert_allclose(dists.log_density("gamma", (2.5, 0.7), x), stats.gamma.logpdf(x, 2.5, scale=1 / 0.7))
        np.testing.assert_allclose(dists.log_density("inv_gamma", (3.0, 2.0), x), stats.invgamma.logpdf(x, 3.0, scale=2.0))

    def test_unknown_kind(self):
        with pytest.raises(BadParameter):
            dists.log_density("cauchy", (0, 1), 0.0)


class TestSpecialFunctions:
    def test_values(self):
        np.testing.assert_allclose(dists.digamma(1.0), -0.5772156649015329, rtol=1e-10)
        np.testing.assert_allclose(dists.trigamma(1.0), np.pi**2 / 6, rtol=1e-10)

    @pytest.mark.parametrize("x", [0.5, 2.0, 10.0])
    def test_recurrence(self, x):
        np.testing.assert_allclose(dists.digamma(x + 1) - dists.digamma(x), 1 / x, rtol=1e-10)
        np.testing.assert_allclose(dists.trigamma(x) - dists.trigamma(x + 1), 1 / x**2, rtol=1e-10)

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_domain(self, x):
        with pytest.raises(BadParameter):
            dists.digamma(x)
        with pytest.raises(BadParameter):
            dists.trigamma(x)
