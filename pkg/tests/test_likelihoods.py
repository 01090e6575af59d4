import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import oracle_channel_stats, oracle_posterior_1d
from gpclassify.likelihoods import (
    AffineChannel,
    LikelihoodModel,
    UnsupportedLikelihoodError,
    channel_stats,
    cond_moments,
    expected_label,
    log_likelihood,
    loglik_grad_hess,
    logit,
    noisy_threshold,
    probit,
    slr_statistics,
    tilted_moments,
)

FBAR_GRID = (-3.0, -1.0, 0.0, 1.0, 3.0)
P_GRID = (0.1, 1.0, 10.0)


class TestConstruction:
    def test_epsilon_only_for_noisy_threshold(self):
        with pytest.raises(ValueError):
            LikelihoodModel("probit", epsilon=0.1)
        with pytest.raises(ValueError):
            LikelihoodModel("noisy_threshold")
        with pytest.raises(ValueError):
            LikelihoodModel("noisy_threshold", epsilon=0.5)

    def test_quad_order_positive(self):
        with pytest.raises(ValueError):
            LikelihoodModel("logit", quad_order=0)


class TestCondMoments:
    def test_probit_symmetry_point(self):
        mean, var = cond_moments(probit(), 0.0)
        assert mean == 0.0 and var == 1.0

    def test_logit_symmetry_point(self):
        mean, var = cond_moments(logit(), 0.0)
        assert mean == 0.0 and var == 1.0

    def test_noisy_threshold_plateau(self):
        mean, var = cond_moments(noisy_threshold(0.01), 1.0)
        assert mean == pytest.approx(0.98)
        assert var == pytest.approx(0.0396)

    @given(f=st.floats(-20, 20), kind=st.sampled_from(["probit", "logit"]))
    @settings(max_examples=60, deadline=None)
    def test_variance_complements_mean(self, f, kind):
        like = probit() if kind == "probit" else logit()
        mean, var = cond_moments(like, f)
        assert var == pytest.approx(1.0 - mean**2)
        assert -1.0 <= mean <= 1.0


class TestSlrStatisticsExamples:
    def test_probit_centered(self):
        stats = slr_statistics(probit(), 1, 0.0, 1.0)
        assert stats.z == pytest.approx(0.0, abs=1e-12)
        assert stats.c == pytest.approx(0.5641896, abs=1e-6)
        assert stats.s == pytest.approx(1.0, abs=1e-12)

    def test_noisy_threshold_centered(self):
        stats = slr_statistics(noisy_threshold(0.01), 1, 0.0, 1.0)
        assert stats.z == pytest.approx(0.0, abs=1e-12)
        assert stats.c == pytest.approx(0.7819269, abs=1e-6)

    @pytest.mark.parametrize("p", P_GRID)
    @pytest.mark.parametrize("order", [1, 5, 10, 40])
    def test_logit_centered_is_odd(self, p, order):
        stats = slr_statistics(logit(order), 1, 0.0, p)
        assert stats.z == pytest.approx(0.0, abs=1e-14)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            slr_statistics(probit(), 1, 0.0, 0.0)

    def test_bad_label_rejected(self):
        with pytest.raises(ValueError):
            slr_statistics(probit(), 0, 0.0, 1.0)


class TestOracleEquivalence:
    """Closed forms must match brute-force quadrature; the oracle is normative."""

    @pytest.mark.parametrize("fbar", FBAR_GRID)
    @pytest.mark.parametrize("p", P_GRID)
    def test_probit(self, fbar, p):
        want = oracle_channel_stats(probit(), fbar, p)
        got = slr_statistics(probit(), 1, fbar, p)
        np.testing.assert_allclose((got.z, got.s, got.c), want, atol=1e-6)

    @pytest.mark.parametrize("fbar", FBAR_GRID)
    @pytest.mark.parametrize("p", P_GRID)
    def test_noisy_threshold(self, fbar, p):
        like = noisy_threshold(0.01)
        want = oracle_channel_stats(like, fbar, p)
        got = slr_statistics(like, 1, fbar, p)
        np.testing.assert_allclose((got.z, got.s, got.c), want, atol=1e-6)

    @pytest.mark.parametrize("fbar", FBAR_GRID)
    @pytest.mark.parametrize("p", P_GRID)
    def test_logit_high_order_quadrature(self, fbar, p):
        # no closed form exists for the logit; Gauss-Hermite converges
        # slowly on tanh over wide marginals (order 40 reaches ~5e-5 at p=10)
        want = oracle_channel_stats(logit(), fbar, p)
        got = slr_statistics(logit(quad_order=40), 1, fbar, p)
        np.testing.assert_allclose((got.z, got.s, got.c), want, atol=1e-4)

    @pytest.mark.parametrize("fbar", FBAR_GRID)
    @pytest.mark.parametrize("p", P_GRID)
    def test_logit_default_order(self, fbar, p):
        # order 10 on a wide marginal is percent-level accurate for the
        # covariance statistic; that is the benchmark operating regime
        want = oracle_channel_stats(logit(), fbar, p)
        got = slr_statistics(logit(), 1, fbar, p)
        np.testing.assert_allclose((got.z, got.s, got.c), want, atol=0.03)


class TestLabelFlip:
    @pytest.mark.parametrize("like", [probit(), logit(), noisy_threshold(0.05)])
    @pytest.mark.parametrize("fbar", [-1.7, 0.0, 0.4])
    def test_negative_label_mirrors_channel(self, like, fbar):
        plus = slr_statistics(like, 1, fbar, 2.0)
        minus = slr_statistics(like, -1, fbar, 2.0)
        assert minus.z == pytest.approx(-plus.z, abs=1e-14)
        assert minus.s == pytest.approx(plus.s, abs=1e-14)
        assert minus.c == pytest.approx(-plus.c, abs=1e-14)

    @pytest.mark.parametrize("like", [probit(), noisy_threshold(0.01)])
    def test_mirrored_channel_matches_oracle(self, like):
        # stats for y=-1 are the brute-force stats of f -> E[-y|f]
        fbar, p = 0.8, 1.7
        z, s, c = oracle_channel_stats(like, fbar, p)
        got = slr_statistics(like, -1, fbar, p)
        np.testing.assert_allclose((got.z, got.s, got.c), (-z, s, -c), atol=1e-6)


class TestBounds:
    @given(
        fbar=st.floats(-30, 30),
        p=st.floats(1e-4, 100),
        which=st.sampled_from(["probit", "logit", "nt"]),
        eps=st.floats(0.001, 0.499),
    )
    @settings(max_examples=200, deadline=None)
    def test_statistics_bounded(self, fbar, p, which, eps):
        like = {"probit": probit(), "logit": logit(),
                "nt": noisy_threshold(eps)}[which]
        stats = slr_statistics(like, 1, fbar, p)
        assert abs(stats.z) <= 1.0
        assert stats.s >= 0.0
        assert stats.s + stats.z**2 <= 1.0 + 1e-9

    @pytest.mark.parametrize("like", [probit(), logit()])
    def test_covariance_vanishes_with_variance(self, like):
        cs = [slr_statistics(like, 1, 0.7, p).c for p in (1e-2, 1e-4, 1e-6)]
        assert cs[0] > cs[1] > cs[2]
        assert cs[2] < 1e-5


class TestExpectedLabel:
    def test_probit_closed_form(self):
        got = expected_label(probit(), np.array([1.0]), np.array([3.0]))
        assert got[0] == pytest.approx(2 * norm.cdf(0.5) - 1, abs=1e-12)

    def test_zero_variance_falls_back_to_conditional_mean(self):
        got = expected_label(logit(), np.array([2.0]), np.array([0.0]))
        assert got[0] == pytest.approx(math.tanh(1.0))


class TestLogLikelihoodAndDerivatives:
    @pytest.mark.parametrize("like", [probit(), logit()])
    @pytest.mark.parametrize("y", [-1.0, 1.0])
    def test_grad_hess_match_finite_differences(self, like, y):
        f = np.linspace(-6, 6, 41)
        h = 1e-4  # second differences need a wide step to beat float noise
        grad, w = loglik_grad_hess(like, y, f)
        num_grad = (log_likelihood(like, y, f + h) - log_likelihood(like, y, f - h)) / (2 * h)
        num_hess = (
            log_likelihood(like, y, f + h)
            - 2 * log_likelihood(like, y, f)
            + log_likelihood(like, y, f - h)
        ) / h**2
        np.testing.assert_allclose(grad, num_grad, atol=1e-6)
        np.testing.assert_allclose(-w, num_hess, atol=1e-5)

    def test_noisy_threshold_has_no_gradient(self):
        with pytest.raises(UnsupportedLikelihoodError):
            loglik_grad_hess(noisy_threshold(0.01), 1.0, np.zeros(3))

    def test_noisy_threshold_loglik_values(self):
        like = noisy_threshold(0.01)
        np.testing.assert_allclose(
            log_likelihood(like, 1.0, np.array([2.0, -2.0, 0.0])),
            [math.log(0.99), math.log(0.01), math.log(0.01)],
        )


class TestTiltedMoments:
    @pytest.mark.parametrize("like", [probit(), logit(quad_order=40),
                                      noisy_threshold(0.01)])
    @pytest.mark.parametrize("y", [1.0, -1.0])
    @pytest.mark.parametrize("cav", [(-0.5, 1.0), (2.0, 0.3), (-3.0, 4.0)])
    def test_against_dense_grid(self, like, y, cav):
        mu, s2 = cav
        log_z, mean, var = tilted_moments(like, y, mu, s2)
        o_mean, o_var, o_log_z = oracle_posterior_1d(
            lambda f: log_likelihood(like, y, f), mu, s2
        )
        assert log_z == pytest.approx(o_log_z, abs=1e-6)
        assert mean == pytest.approx(o_mean, abs=1e-6)
        assert var == pytest.approx(o_var, abs=1e-6)

    def test_affine_channel_is_conjugate(self):
        ch = AffineChannel(1.5, -0.2, 0.7)
        log_z, mean, var = tilted_moments(ch, 0.9, 0.1, 2.0)
        o_mean, o_var, o_log_z = oracle_posterior_1d(
            lambda f: log_likelihood(ch, 0.9, f), 0.1, 2.0
        )
        assert log_z == pytest.approx(o_log_z, abs=1e-9)
        assert mean == pytest.approx(o_mean, abs=1e-9)
        assert var == pytest.approx(o_var, abs=1e-9)
