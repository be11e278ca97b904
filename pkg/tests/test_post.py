import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rater_infer import post, sampler
from rater_infer.errors import BadParameter, NumericalFailure

from _helpers import small_config, two_way_data


def atom_draws(pi1, mu, omega2, pi2=None, eta=None, phi2=None, gam=None, beta=None):
    """ChainDraws holding only mixture atoms, one row per draw."""
    row = lambda v: np.atleast_2d(np.asarray(v, dtype=float))
    pi1 = row(pi1)
    n, R = pi1.shape
    atoms = dict(pi1=pi1, mu=row(mu), omega2=row(omega2))
    for name, v, default in (("pi2", pi2, 1.0 / R), ("eta", eta, 0.0), ("phi2", phi2, 1.0), ("gam", gam, 10.0), ("beta", beta, 0.15)):
        atoms[name] = np.full((n, R), default) if v is None else row(v)
    zeros = np.zeros((n, 0))
    return sampler.ChainDraws(
        theta=zeros, tau=zeros, inv_sigma2=zeros, scalars={"eta_H": np.zeros(n), "mu_G": np.zeros(n), "mu0": np.zeros(n), "eta0": np.zeros(n)},
        atoms=atoms, counts1=np.zeros((n, R)), counts2=np.zeros((n, R)), burn_in=0, thin=1, model_kind="BNP",
    )


@pytest.fixture(scope="module")
def fitted():
    d = two_way_data(I=20, J=6)
    return d, sampler.run_chain(d, small_config(R=4, iters=120, burn_in=20, thin=2, seed=5))


class TestCentering:
    def test_zero_shift_is_identity(self, fitted):
        _, draws = fitted
        d0 = draws.copy()
        d0.scalars["eta_H"][:] = 0.0
        c = post.sc_center_draws(d0)
        np.testing.assert_array_equal(c.theta, d0.theta)
        np.testing.assert_array_equal(c.tau, d0.tau)

    def test_predictor_unchanged(self, fitted):
        d, draws = fitted
        c = post.sc_center_draws(draws)
        np.testing.assert_allclose(
            c.theta[:, d.subject] + c.tau[:, d.rater], draws.theta[:, d.subject] + draws.tau[:, d.rater], atol=1e-9
        )

    def test_weighted_bias_atoms_sum_to_zero(self, fitted):
        _, draws = fitted
        c = post.sc_center_draws(draws)
        # eta_H averages the occupied components with renormalized weights
        w = draws.atoms["pi2"] * (draws.counts2 > 0)
        w = w / w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose((w * c.atoms["eta"]).sum(axis=1), 0.0, atol=1e-9)

    def test_variance_functionals_invariant(self, fitted):
        _, draws = fitted
        c = post.sc_center_draws(draws)
        for name in ("icc_A", "omega2_G", "phi2_H", "beta_H", "sigma_tilde_H"):
            np.testing.assert_array_equal(c.scalars[name], draws.scalars[name])

    def test_guarded(self, fitted):
        _, draws = fitted
        with pytest.raises(BadParameter):
            post.sc_center_draws(post.sc_center_draws(draws))


class TestDensityGrid:
    def test_single_atom_peak(self):
        g = post.eval_density_grid(atom_draws([1.0], [50.0], [50.0]), "theta", (20, 80), 61)
        assert g.values[0, 30] == pytest.approx(1 / np.sqrt(2 * np.pi * 50), rel=1e-12)
        assert round(g.values[0, 30], 5) == 0.05642

    def test_symmetric_mixture(self):
        g = post.eval_density_grid(atom_draws([0.5, 0.5], [35.0, 65.0], [10.0, 10.0]), "theta", (20, 80), 121)
        np.testing.assert_allclose(g.mean, g.mean[::-1], atol=1e-12)
        np.testing.assert_allclose(g.local_maxima(), [35.0, 65.0])

    def test_integrates_to_one(self):
        rng = np.random.default_rng(0)
        n = 100
        pi = rng.dirichlet(np.ones(3), n)
        mu = rng.uniform(30, 70, (n, 3))
        om = rng.uniform(2, 40, (n, 3))
        sd = np.sqrt((pi * (om + mu**2)).sum(axis=1) - ((pi * mu).sum(axis=1)) ** 2)
        lo, hi = (pi * mu).sum(axis=1) - 6 * sd, (pi * mu).sum(axis=1) + 6 * sd
        for s in range(n):
            g = post.eval_density_grid(atom_draws(pi[s], mu[s], om[s]), "theta", (lo[s], hi[s]), 2001)
            assert abs(g.integral()[0] - 1) < 0.01

    def test_bands_ordered(self, fitted):
        _, draws = fitted
        g = post.eval_density_grid(draws, "tau", (-20, 20), 41)
        assert np.all(g.lo <= g.hi) and np.all(g.values >= 0)

    @pytest.mark.parametrize("shape, rate", [(1.2, 0.5), (3.5, 2.0), (11.0, 11 / 0.15), (4600.0, 4600 / 0.2)])
    def test_epsilon_matches_mixing_integral(self, shape, rate):
        def direct(x):
            f = lambda lam: stats.norm.pdf(x, scale=lam**-0.5) * stats.gamma.pdf(lam, shape, scale=1 / rate)
            m = shape / rate
            kw = dict(epsabs=0, epsrel=1e-12, limit=400)
            return integrate.quad(f, 0, m, **kw)[0] + integrate.quad(f, m, np.inf, **kw)[0]

        sd = np.sqrt(rate / shape)
        x = sd * np.array([0.0, 0.5, 1.5, 4.0])
        np.testing.assert_allclose(post.gamma_mixed_normal_pdf(x, shape, rate), [direct(v) for v in x], rtol=1e-8)

    def test_epsilon_grid(self):
        d = atom_draws([1.0], [0.0], [1.0], pi2=[1.0], gam=[10.0], beta=[0.15])
        g = post.eval_density_grid(d, "epsilon", (-20, 20), 401)
        ref = stats.t.pdf(g.points, df=22, scale=np.sqrt(1 / 0.15))
        np.testing.assert_allclose(g.values[0], ref, rtol=1e-12)
        assert abs(g.integral()[0] - 1) < 0.01

    def test_large_shape_is_normal(self):
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(post.gamma_mixed_normal_pdf(x, 1e6, 1e6), stats.norm.pdf(x), rtol=1e-5)

    @pytest.mark.parametrize("which, rng_, n", [("theta", (1, 1), 10), ("theta", (0, 1), 1), ("sigma", (0, 1), 10)])
    def test_bad_requests(self, which, rng_, n):
        with pytest.raises(BadParameter):
            post.eval_density_grid(atom_draws([1.0], [0.0], [1.0]), which, rng_, n)


class TestWaic:
    def test_single_draw(self):
        w, lppd, p = post.waic([[-1.0, -2.5]])
        assert p == 0 and w == pytest.approx(7.0)

    def test_hand_example(self):
        w, lppd, p = post.waic([[-1.0], [-2.0]])
        assert lppd == pytest.approx(np.log(0.5 * (np.exp(-1) + np.exp(-2))), rel=1e-14)
        assert round(lppd, 5) == -1.37989
        assert p == 0.5
        assert w == pytest.approx(-2 * (lppd - 0.5), rel=1e-14)
        assert abs(w - 3.75977) < 1e-5

    def test_identical_draws(self):
        assert post.waic(np.full((50, 3), -1.7))[2] == 0.0

    def test_non_finite(self):
        with pytest.raises(NumericalFailure):
            post.waic([[-1.0, -np.inf]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 30), st.integers(1, 12), st.integers(0, 1000))
    def test_order_invariance_and_additivity(self, S, n, seed):
        ll = -np.random.default_rng(seed).gamma(2.0, 1.0, (S, n))
        perm = np.random.default_rng(seed + 1).permutation(n)
        np.testing.assert_allclose(post.waic(ll[:, perm]), post.waic(ll), rtol=1e-12)
        k = n // 2
        if 0 < k < n:
            parts = np.add(post.waic(ll[:, :k]), post.waic(ll[:, k:]))
            np.testing.assert_allclose(parts, post.waic(ll), rtol=1e-12)

    def test_pointwise_loglik(self, fitted):
        d, draws = fitted
        ll = post.pointwise_loglik(draws, d)
        s = 3
        ref = stats.norm.logpdf(
            d.score, draws.theta[s, d.subject] + draws.tau[s, d.rater], 1 / np.sqrt(draws.inv_sigma2[s, d.rater])
        )
        np.testing.assert_allclose(ll[s], ref, rtol=1e-12)


class TestSummaries:
    def test_constant_trace(self):
        s = post.summarize_trace(np.full(100, 3.2))
        assert (s["mean"], s["lo"], s["hi"]) == (pytest.approx(3.2), 3.2, 3.2)

    def test_quantile_rule(self):
        s = post.summarize_trace(np.arange(1.0, 101.0))
        np.testing.assert_allclose([s["lo"], s["hi"]], [3.475, 97.525], rtol=1e-12)

    def test_white_noise_ess(self):
        x = np.random.default_rng(0).standard_normal(10_000)
        assert 8000 <= post.effective_sample_size(x) <= 12000

    def test_ar1_ess(self):
        rng = np.random.default_rng(1)
        rho, n = 0.8, 100_000
        x = np.empty(n)
        x[0] = 0.0
        e = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + e[t]
        expected = n * (1 - rho) / (1 + rho)
        assert abs(post.effective_sample_size(x) / expected - 1) < 0.1

    def test_ess_non_finite(self):
        assert np.isnan(post.effective_sample_size([1.0, np.inf, 2.0, 3.0]))

    def test_summary_permutation_invariant(self, fitted):
        d, draws = fitted
        perm = np.random.default_rng(0).permutation(draws.n_draws)
        shuffled = draws.copy()
        shuffled.theta = draws.theta[perm]
        a = post.summarize(draws).theta
        b = post.summarize(shuffled).theta
        np.testing.assert_allclose(a["lo"], b["lo"], rtol=1e-12)
        np.testing.assert_allclose(a["hi"], b["hi"], rtol=1e-12)
        np.testing.assert_allclose(a["mean"], b["mean"], rtol=1e-12)

    def test_report_contents(self, fitted):
        d, draws = fitted
        r = post.summarize(draws, d).to_dict()
        assert r["icc"]["lo"] <= r["icc"]["hi"]
        assert len(r["theta"]["mean"]) == d.num_subjects
        assert set(r["waic"]) == {"waic", "lppd", "p_waic"}
        assert all(lo <= hi for lo, hi in zip(r["tau"]["lo"], r["tau"]["hi"]))

    def test_bp_note(self):
        d = two_way_data(I=10, J=4)
        draws = sampler.run_chain(d, small_config(model_kind="BP"))
        assert any("single-cluster" in n for n in post.summarize(draws).notes)


class TestRhat:
    def test_identical_chains(self):
        x = np.random.default_rng(0).standard_normal(500)
        assert post.potential_scale_reduction([x, x]) == pytest.approx((499 / 500) ** 0.5)

    def test_separated_chains(self):
        rng = np.random.default_rng(1)
        assert post.potential_scale_reduction([rng.standard_normal(200), 5 + rng.standard_normal(200)]) > 2

    def test_needs_two_chains(self):
        with pytest.raises(BadParameter):
            post.potential_scale_reduction([[1.0, 2.0]])
