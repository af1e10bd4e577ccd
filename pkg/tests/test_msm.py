import numpy as np
import pytest
from scipy import stats

from areamix import (
    DivergenceError,
    DomainError,
    MsmConfig,
    ShapeError,
    conditional_beta,
    conditional_eta,
    conditional_sigma2_eta,
    draw_inverse_gamma,
    fit_msm,
)


def joint_gaussian_condition(prior_cov, design, noise_var, obs):
    """Posterior of theta ~ N(0, prior_cov) given obs = design theta + noise.

    Derived through the joint normal of (theta, obs) rather than the
    precision-form conditional, so it cross-checks the sampler algebra.
    """
    cross = prior_cov @ design.T
    obs_cov = design @ prior_cov @ design.T + np.diag(noise_var)
    gain = np.linalg.solve(obs_cov, cross.T).T
    mean = gain @ obs
    cov = prior_cov - gain @ cross.T
    return mean, (cov + cov.T) / 2.0


@pytest.fixture(scope="module")
def toy_problem():
    rng = np.random.default_rng(123)
    n, p, r = 9, 2, 3
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    psi_raw = rng.normal(size=(n, r))
    psi, _ = np.linalg.qr(psi_raw)
    m = rng.normal(size=(r, r))
    k_inv = m @ m.T + np.eye(r)
    z = rng.normal(size=n)
    d = rng.uniform(0.2, 1.0, size=n)
    return z, d, x, psi, k_inv


class TestConditionalBeta:
    def test_pinned_two_point_case(self):
        # X = (1, 1)', d = (1, 1), z = (0, 2): precision 2.01, mean 2/2.01
        z = np.array([0.0, 2.0])
        d = np.array([1.0, 1.0])
        x = np.ones((2, 1))
        psi = np.zeros((2, 1))
        eta = np.zeros(1)
        mean, cov = conditional_beta(z, d, x, psi, eta, sigma2_beta=100.0)
        assert cov[0, 0] == pytest.approx(1.0 / 2.01, rel=1e-12)
        assert mean[0] == pytest.approx(2.0 / 2.01, rel=1e-12)

    def test_matches_joint_gaussian_route(self, toy_problem):
        z, d, x, psi, _ = toy_problem
        rng = np.random.default_rng(5)
        eta = rng.normal(size=psi.shape[1])
        sigma2_beta = 7.3
        mean, cov = conditional_beta(z, d, x, psi, eta, sigma2_beta)
        prior = sigma2_beta * np.eye(x.shape[1])
        want_mean, want_cov = joint_gaussian_condition(prior, x, d, z - psi @ eta)
        assert np.allclose(mean, want_mean, rtol=1e-10)
        assert np.allclose(cov, want_cov, rtol=1e-10)

    def test_bad_prior_variance(self, toy_problem):
        z, d, x, psi, _ = toy_problem
        with pytest.raises(DomainError):
            conditional_beta(z, d, x, psi, np.zeros(psi.shape[1]), 0.0)


class TestConditionalEta:
    def test_matches_joint_gaussian_route(self, toy_problem):
        z, d, x, psi, k_inv = toy_problem
        rng = np.random.default_rng(6)
        beta = rng.normal(size=x.shape[1])
        sigma2_eta = 0.6
        mean, cov = conditional_eta(z, d, x, psi, beta, k_inv, sigma2_eta)
        prior = sigma2_eta * np.linalg.inv(k_inv)
        want_mean, want_cov = joint_gaussian_condition(prior, psi, d, z - x @ beta)
        assert np.allclose(mean, want_mean, rtol=1e-9)
        assert np.allclose(cov, want_cov, rtol=1e-9)

    def test_shrinks_to_zero_as_variance_vanishes(self, toy_problem):
        z, d, x, psi, k_inv = toy_problem
        beta = np.zeros(x.shape[1])
        mean, _ = conditional_eta(z, d, x, psi, beta, k_inv, 1e-10)
        assert np.max(np.abs(mean)) < 1e-6


class TestConditionalSigma2Eta:
    def test_shape_and_scale(self):
        eta = np.array([1.0, 2.0])
        k_inv = np.array([[2.0, 0.0], [0.0, 0.5]])
        shape, scale = conditional_sigma2_eta(eta, k_inv, a_eta=0.1, b_eta=0.1)
        assert shape == pytest.approx(0.1 + 1.0)
        # eta' K^{-1} eta = 2 + 2 = 4
        assert scale == pytest.approx(0.1 + 2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            conditional_sigma2_eta(np.ones(3), np.eye(2), 0.1, 0.1)

    def test_bad_hyperparameters(self):
        with pytest.raises(DomainError):
            conditional_sigma2_eta(np.ones(2), np.eye(2), 0.0, 0.1)


class TestDrawInverseGamma:
    def test_distribution(self):
        rng = np.random.default_rng(0)
        shape, scale = 3.0, 2.0
        draws = np.array([draw_inverse_gamma(rng, shape, scale) for _ in range(20000)])
        # everything positive, moments near scale/(shape-1), KS against the law
        assert np.all(draws > 0)
        assert draws.mean() == pytest.approx(scale / (shape - 1.0), rel=0.05)
        ks = stats.kstest(draws, stats.invgamma(shape, scale=scale).cdf)
        assert ks.pvalue > 0.001

    def test_reference_draw(self):
        # mirrors the documented definition: 1 / Gamma(shape, rate=scale)
        a = draw_inverse_gamma(np.random.default_rng(99), 1.1, 2.1)
        b = 1.0 / np.random.default_rng(99).gamma(1.1, 1.0 / 2.1)
        assert a == b


class TestFitMsm:
    def test_shapes_and_retention(self, small_inputs):
        study, x, _, basis = small_inputs
        cfg = MsmConfig(iterations=50, burn_in=20, thin=3, seed=1)
        log_table = study.truth
        fit = fit_msm(log_table.z, log_table.d, x, basis, cfg)
        # retained iterations: 20, 23, ..., 47
        assert fit.n_retained == 10
        assert fit.beta.shape == (10, x.shape[1])
        assert fit.eta.shape == (10, basis.r)
        assert fit.sigma2_eta.shape == (10,)
        assert fit.y.shape == (10, log_table.n_rows)
        assert fit.seed == 1

    def test_y_consistent_with_draws(self, small_inputs):
        study, x, _, basis = small_inputs
        cfg = MsmConfig(iterations=30, burn_in=10, seed=4)
        fit = fit_msm(study.truth.z, study.truth.d, x, basis, cfg)
        rebuilt = fit.beta @ x.T + fit.eta @ basis.psi.T
        assert np.allclose(fit.y, rebuilt, rtol=1e-12)

    def test_deterministic_in_seed(self, small_inputs):
        study, x, _, basis = small_inputs
        cfg = MsmConfig(iterations=40, burn_in=10, seed=9)
        a = fit_msm(study.truth.z, study.truth.d, x, basis, cfg)
        b = fit_msm(study.truth.z, study.truth.d, x, basis, cfg)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.sigma2_eta, b.sigma2_eta)
        c = fit_msm(study.truth.z, study.truth.d, x, basis, MsmConfig(iterations=40, burn_in=10, seed=10))
        assert not np.array_equal(a.y, c.y)

    def test_fixed_variance_not_sampled(self, small_inputs):
        study, x, _, basis = small_inputs
        cfg = MsmConfig(iterations=30, burn_in=5, seed=2, sigma2_eta_fixed=0.7)
        fit = fit_msm(study.truth.z, study.truth.d, x, basis, cfg)
        assert np.all(fit.sigma2_eta == 0.7)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_iteration(self, small_inputs):
        study, x, _, basis = small_inputs
        z = study.truth.z.copy()
        z[0] = 1e300
        cfg = MsmConfig(iterations=20, burn_in=5, seed=3)
        with pytest.raises(DivergenceError, match="iteration"):
            fit_msm(z, study.truth.d, x, basis, cfg)

    def test_undefined_variances_rejected(self, small_inputs):
        study, x, _, basis = small_inputs
        d = study.truth.d.copy()
        d[3] = np.nan
        with pytest.raises(DomainError, match="impute"):
            fit_msm(study.truth.z, d, x, basis, MsmConfig(iterations=10, burn_in=1))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            MsmConfig(iterations=10, burn_in=10).validate()
        with pytest.raises(DomainError):
            MsmConfig(thin=0).validate()
        with pytest.raises(DomainError):
            MsmConfig(sigma2_beta=-1.0).validate()
        with pytest.raises(DomainError):
            MsmConfig(sigma2_eta_fixed=0.0).validate()

    def test_posterior_tracks_closed_form(self, small_inputs):
        # with sigma2_eta held fixed the joint (beta, eta) posterior is
        # Gaussian; the chain mean should land near it
        study, x, _, basis = small_inputs
        sigma2_eta = 0.5
        cfg = MsmConfig(
            iterations=4000, burn_in=500, seed=8, sigma2_eta_fixed=sigma2_eta,
            sigma2_beta=10.0,
        )
        fit = fit_msm(study.truth.z, study.truth.d, x, basis, cfg)
        p = x.shape[1]
        design = np.hstack([x, basis.psi])
        prior = np.zeros((design.shape[1], design.shape[1]))
        prior[:p, :p] = 10.0 * np.eye(p)
        prior[p:, p:] = sigma2_eta * basis.k
        want_mean, _ = joint_gaussian_condition(prior, design, study.truth.d, study.truth.z)
        got_mean = np.concatenate([fit.beta.mean(axis=0), fit.eta.mean(axis=0)])
        assert np.allclose(got_mean, want_mean, atol=0.08)
