import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from rater_infer import post, sampler, variants
from rater_infer.core import RatingDataset
from rater_infer.errors import BadParameter
from rater_infer.simbench import BENCH_PRIORS

from _helpers import ProbeRNG, make_state, small_config, two_way_data


def oneway_data(I=500, n=4, omega2=50.0, phi2=150.0, seed=0):
    rng = np.random.default_rng(seed)
    theta = 50 + np.sqrt(omega2) * rng.standard_normal(I)
    subject = np.repeat(np.arange(I), n)
    y = theta[subject] + np.sqrt(phi2) * rng.standard_normal(subject.size)
    rater = np.tile(np.arange(n), I)
    return RatingDataset(subject, rater, y, I, n, float(np.floor(y.min())), float(np.ceil(y.max())))


def ordinal_state(K, ystar, delta=None, **kw):
    base = make_state(**kw)
    fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
    d = variants.default_thresholds(K) if delta is None else np.asarray(delta, dtype=float)
    return variants.OrdinalState(**fields, ystar=np.asarray(ystar, dtype=float), delta=d, K=K)


def ordinal_data(y, J=1):
    y = np.asarray(y, dtype=float)
    return RatingDataset(np.arange(y.size), np.zeros(y.size, dtype=np.int64), y, y.size, J, 1.0, float(y.max()))


class TestOneWay:
    def test_parametric_icc_recovered(self):
        d = oneway_data()
        cfg = small_config(R=1, iters=1500, burn_in=500, thin=1, seed=3, **BENCH_PRIORS)
        draws = variants.run_oneway_chain(d, cfg)
        icc = draws.scalars["icc_oneway"].mean()
        assert abs(icc - 0.25) <= 0.03

    def test_identical_ratings_give_icc_near_one(self):
        rng = np.random.default_rng(1)
        theta = 50 + 10 * rng.standard_normal(100)
        subject = np.repeat(np.arange(100), 3)
        d = RatingDataset(subject, np.tile(np.arange(3), 100), theta[subject], 100, 3, 0.0, 100.0)
        draws = variants.run_oneway_chain(d, small_config(R=3, iters=400, burn_in=200, thin=1, seed=2))
        assert draws.scalars["icc_oneway"].mean() > 0.99

    def test_deterministic(self):
        d = oneway_data(I=40)
        cfg = small_config(R=3, seed=8)
        a, b = variants.run_oneway_chain(d, cfg), variants.run_oneway_chain(d, cfg)
        np.testing.assert_array_equal(a.theta, b.theta)
        for k in a.scalars:
            np.testing.assert_array_equal(a.scalars[k], b.scalars[k])

    def test_functionals(self):
        d = oneway_data(I=20)
        st_ = variants.init_oneway_state(d, small_config(R=2), np.random.default_rng(0))
        st_.c1[:] = 0
        st_.c2[:] = 0
        st_.mu[0], st_.omega2[0], st_.eta[0], st_.phi2[0] = 50.0, 50.0, 0.0, 150.0
        f = variants.oneway_functionals(st_)
        assert f["icc_oneway"] == 0.25

    def test_pointwise_loglik_single_atom(self):
        d = oneway_data(I=10)
        draws = variants.run_oneway_chain(d, small_config(R=1, iters=30, burn_in=20, thin=5))
        ll = variants.oneway_pointwise_loglik(draws, d)
        e = np.asarray(d.score)[None, :] - draws.theta[:, d.subject]
        ref = norm.logpdf(e, draws.atoms["eta"][:, :1], np.sqrt(draws.atoms["phi2"][:, :1]))
        np.testing.assert_allclose(ll, ref, rtol=1e-10)

    def test_centering_applies(self):
        d = oneway_data(I=20)
        draws = variants.run_oneway_chain(d, small_config(R=2))
        c = post.sc_center_draws(draws)
        np.testing.assert_allclose(c.theta, draws.theta + draws.scalars["eta_H"][:, None])
        np.testing.assert_array_equal(c.scalars["icc_oneway"], draws.scalars["icc_oneway"])


class TestCategoryProb:
    def test_values(self):
        assert round(variants.ordinal_category_prob(0.0, 0.0, 1.0, -1.0, 1.0), 6) == 0.682689
        assert variants.ordinal_category_prob(0.0, 0.0, 1.0, -np.inf, 0.0) == 0.5

    def test_unordered(self):
        with pytest.raises(BadParameter):
            variants.ordinal_category_prob(0.0, 0.0, 1.0, 1.0, 1.0)
        with pytest.raises(BadParameter):
            variants.ordinal_category_prob(0.0, 0.0, 0.0, 0.0, 1.0)

    def test_far_upper_tail_keeps_precision(self):
        p = variants.ordinal_category_prob(0.0, 0.0, 1.0, 30.0, np.inf)
        assert p > 0 and np.isclose(np.log(p), norm.logsf(30.0), rtol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-5, 5),
        st.floats(-3, 3),
        st.floats(0.05, 10),
        st.lists(st.floats(-6, 6), min_size=1, max_size=8, unique=True),
    )
    def test_sum_to_one(self, theta, tau, s2, cuts):
        delta = np.concatenate(([-np.inf], np.sort(cuts), [np.inf]))
        p = variants.ordinal_category_prob(theta, tau, s2, delta[:-1], delta[1:])
        assert abs(p.sum() - 1.0) <= 1e-12


class TestLatent:
    def test_draws_in_category(self):
        y = np.array([1, 2, 3, 4, 5] * 40)
        d = ordinal_data(y)
        s = ordinal_state(5, np.zeros(y.size), I=y.size, theta=np.linspace(-3, 6, y.size))
        variants.update_latent_Y(s, d, np.random.default_rng(0))
        k = np.searchsorted(s.delta, s.ystar, side="left")
        np.testing.assert_array_equal(k, y)

    def test_binary_positive(self):
        y = np.array([2] * 50 + [1] * 50)
        d = ordinal_data(y)
        s = ordinal_state(2, np.zeros(100), delta=[-np.inf, 0.0, np.inf], I=100, theta=np.full(100, -4.0))
        variants.update_latent_Y(s, d, np.random.default_rng(1))
        assert np.all(s.ystar[:50] > 0) and np.all(s.ystar[50:] <= 0)


class TestThresholds:
    def test_interval_arithmetic(self):
        # categories 2 and 3 constrain the free cut between them
        delta = [-np.inf, 0.0, 2.0, 3.0, np.inf]
        s = ordinal_state(4, [1.0, 1.2, 1.5, 2.5], delta=delta, I=4)
        rng = ProbeRNG()
        variants.update_thresholds(s, ordinal_data([2, 2, 3, 3]), rng)
        assert s.delta[2] == pytest.approx(1.35)

    def test_uniform_on_interval(self):
        delta = [-np.inf, 0.0, 2.0, 3.0, np.inf]
        d = ordinal_data([2, 3])
        out = []
        for seed in range(2000):
            s = ordinal_state(4, [1.2, 1.5], delta=list(delta), I=2)
            variants.update_thresholds(s, d, np.random.default_rng(seed))
            out.append(s.delta[2])
        out = np.array(out)
        assert out.min() >= 1.2 and out.max() <= 1.5
        assert abs(out.mean() - 1.35) < 0.01

    def test_unconstrained(self):
        delta = [-np.inf, 0.0, 2.0, 3.0, np.inf]
        s = ordinal_state(4, [-1.0, 5.0], delta=delta, I=2)
        variants.update_thresholds(s, ordinal_data([1, 4]), ProbeRNG())
        assert s.delta[2] == 1.5

    def test_three_categories_noop(self):
        s = ordinal_state(3, [-1.0, 0.5, 2.0], I=3)
        before = s.delta.copy()
        variants.update_thresholds(s, ordinal_data([1, 2, 3]), np.random.default_rng(0))
        np.testing.assert_array_equal(s.delta, before)

    def test_ordering_preserved_in_chain(self):
        from _ordinal import ordinal_dataset

        d, _ = ordinal_dataset(I=60, J=10, seed=1)
        draws = variants.run_ordinal_chain(d, small_config(R=3, iters=60, lam_mu0=None, seed=1))
        assert np.all(np.diff(draws.extras["delta"], axis=1) > 0)


class TestOrdinalChain:
    def test_binary_refuses_free_sigma(self):
        y = np.array([1, 2, 2, 1], dtype=float)
        d = RatingDataset(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), y, 2, 2, 1.0, 2.0)
        with pytest.raises(BadParameter):
            variants.run_ordinal_chain(d, small_config(fix_sigma=False, lam_mu0=None))

    def test_binary_fixes_sigma(self):
        y = np.array([1, 2, 2, 1, 2, 2], dtype=float)
        d = RatingDataset(np.array([0, 0, 1, 1, 2, 2]), np.array([0, 1, 0, 1, 0, 1]), y, 3, 2, 1.0, 2.0)
        draws = variants.run_ordinal_chain(d, small_config(lam_mu0=None, iters=30, burn_in=10))
        np.testing.assert_array_equal(draws.inv_sigma2, 1.0)

    def test_rejects_non_integer(self):
        y = np.array([1.5, 2.0])
        d = RatingDataset(np.array([0, 1]), np.array([0, 0]), y, 2, 1, 1.0, 3.0)
        with pytest.raises(BadParameter):
            variants.run_ordinal_chain(d, small_config(lam_mu0=None))

    def test_probabilities_sum_to_one(self):
        from _ordinal import ordinal_dataset

        d, _ = ordinal_dataset(I=40, J=8, seed=2)
        draws = variants.run_ordinal_chain(d, small_config(R=3, iters=40, burn_in=20, lam_mu0=None))
        K = draws.extras["K"]
        total = 0.0
        for k in range(1, K + 1):
            dk = d.with_scores(np.full(d.n_obs, float(k)))
            total = total + np.exp(variants.ordinal_pointwise_loglik(draws, dk))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)


class TestPostprocess:
    @pytest.fixture
    def draws(self):
        d = two_way_data(I=10, J=4)
        return sampler.run_chain(d, small_config(R=2, iters=24, burn_in=20, thin=1))

    def test_identity_when_centres_vanish(self, draws):
        draws.scalars["mu_G"][:] = 0.0
        draws.scalars["eta_H"][:] = 0.0
        out = variants.ordinal_postprocess(draws)
        np.testing.assert_array_equal(out.theta, draws.theta)
        np.testing.assert_array_equal(out.tau, draws.tau)

    def test_shift(self, draws):
        draws.scalars["mu_G"][:] = 2.0
        draws.scalars["eta_H"][:] = -1.0
        out = variants.ordinal_postprocess(draws)
        np.testing.assert_allclose(out.theta, draws.theta - 3)
        np.testing.assert_allclose(out.tau, draws.tau + 3)
        np.testing.assert_allclose(out.theta[:, :4] + out.tau, draws.theta[:, :4] + draws.tau)
        np.testing.assert_allclose(out.scalars["mu0"], draws.scalars["mu0"] - 3)

    def test_guarded(self, draws):
        out = variants.ordinal_postprocess(draws)
        with pytest.raises(BadParameter):
            variants.ordinal_postprocess(out)
        with pytest.raises(BadParameter):
            variants.ordinal_postprocess(post.sc_center_draws(draws))


class TestDefaultThresholds:
    def test_values(self):
        np.testing.assert_array_equal(variants.default_thresholds(5), [-np.inf, 0, 1, 2, 3, np.inf])
        np.testing.assert_array_equal(variants.default_thresholds(2), [-np.inf, 0, np.inf])

    def test_invalid(self):
        with pytest.raises(BadParameter):
            variants.default_thresholds(1)
        with pytest.raises(BadParameter):
            variants.default_thresholds(4, fixed=(2.0, 1.0))
