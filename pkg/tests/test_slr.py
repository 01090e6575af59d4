import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from conftest import conditional_mean_fn
from gpclassify.likelihoods import (
    SlrStatistics,
    logit,
    noisy_threshold,
    probit,
    slr_statistics,
)
from gpclassify.slr import (
    OMEGA_CLAMP,
    InternalConsistencyError,
    SiteLinearization,
    slr_site,
)


class TestAffineExactness:
    def test_worked_example(self):
        # channel E[y|f] = 2f + 1 with conditional variance 0.5, prior (0.3, 2):
        # z = 2*0.3 + 1, c = 2p, s = 4p + 0.5, so the fit recovers the channel
        p = 2.0
        stats = SlrStatistics(z=2 * 0.3 + 1, s=4 * p + 0.5, c=2 * p)
        a, b, omega = slr_site(stats, 0.3, p)
        assert a == pytest.approx(2.0, abs=1e-12)
        assert b == pytest.approx(1.0, abs=1e-12)
        assert omega == pytest.approx(0.5, abs=1e-12)

    @given(
        slope=st.floats(-5, 5),
        intercept=st.floats(-5, 5),
        noise=st.floats(1e-3, 10),
        fbar=st.floats(-10, 10),
        p=st.floats(1e-3, 50),
    )
    @settings(max_examples=200, deadline=None)
    def test_exact_for_any_prior(self, slope, intercept, noise, fbar, p):
        stats = SlrStatistics(
            z=slope * fbar + intercept, s=slope**2 * p + noise, c=slope * p
        )
        a, b, omega = slr_site(stats, fbar, p)
        assert a == pytest.approx(slope, rel=1e-10, abs=1e-10)
        assert b == pytest.approx(intercept, rel=1e-10, abs=1e-10)
        assert omega == pytest.approx(noise, rel=1e-10, abs=1e-10)


class TestLikelihoodSites:
    def test_probit_site_centered(self):
        # frozen from the quadrature oracle: c = sqrt(2/pi), omega = 1 - 1/pi
        stats = slr_statistics(probit(), 1, 0.0, 1.0)
        a, b, omega = slr_site(stats, 0.0, 1.0)
        assert a == pytest.approx(0.5641896, abs=1e-6)
        assert b == pytest.approx(0.0, abs=1e-12)
        assert omega == pytest.approx(1.0 - 1.0 / np.pi, abs=1e-9)
        assert omega == pytest.approx(0.6816901, abs=1e-6)

    def test_noisy_threshold_site_centered(self):
        stats = slr_statistics(noisy_threshold(0.01), 1, 0.0, 1.0)
        a, b, omega = slr_site(stats, 0.0, 1.0)
        assert a == pytest.approx(0.7819269, abs=1e-6)
        assert b == pytest.approx(0.0, abs=1e-12)
        assert omega == pytest.approx(1.0 - 0.7819269**2, abs=1e-6)

    @pytest.mark.parametrize("like", [probit(), logit(), noisy_threshold(0.01)])
    @pytest.mark.parametrize("fbar,p", [(-2.0, 0.5), (0.0, 1.0), (1.5, 4.0)])
    def test_omega_dominates_conditional_variance(self, like, fbar, p):
        # omega is squared fit error plus E[C[y|f]]; the latter is its floor
        stats = slr_statistics(like, 1, fbar, p)
        _, _, omega = slr_site(stats, fbar, p)
        m = conditional_mean_fn(like)
        ev_cond, _ = quad(
            lambda f: (1 - m(f) ** 2) * norm.pdf(f, fbar, np.sqrt(p)),
            fbar - 30 * np.sqrt(p), fbar + 30 * np.sqrt(p), limit=300,
        )
        assert omega >= ev_cond - 1e-9
        assert omega > 0


class TestMseOptimality:
    def quadrature_mse(self, like, a, b, fbar, p):
        m = conditional_mean_fn(like)
        sd = np.sqrt(p)
        lo, hi = fbar - 32 * sd, fbar + 32 * sd
        pieces = sorted({lo, min(0.0, hi), max(0.0, lo), hi})
        total = 0.0
        for u, v in zip(pieces[:-1], pieces[1:]):
            if v > u:
                val, _ = quad(
                    lambda f: ((m(f) - a * f - b) ** 2 + (1 - m(f) ** 2))
                    * norm.pdf(f, fbar, sd),
                    u, v, limit=400,
                )
                total += val
        return total

    @pytest.mark.parametrize("like", [probit(), noisy_threshold(0.05)])
    @pytest.mark.parametrize("fbar,p", [(0.0, 1.0), (-1.0, 2.5)])
    def test_no_perturbation_beats_the_fit(self, like, fbar, p):
        stats = slr_statistics(like, 1, fbar, p)
        a, b, omega = slr_site(stats, fbar, p)
        base = self.quadrature_mse(like, a, b, fbar, p)
        assert base == pytest.approx(omega, abs=1e-7)
        rng = np.random.default_rng(0)
        for _ in range(40):
            da, db = rng.uniform(-0.1, 0.1, size=2)
            assert self.quadrature_mse(like, a + da, b + db, fbar, p) >= base - 1e-9


class TestErrorHandling:
    def test_degenerate_input_variance(self):
        stats = SlrStatistics(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            slr_site(stats, 0.0, 1e-13)

    def test_tiny_negative_omega_clamped(self):
        # c^2/p exactly equals s: omega would be 0, clamps to the floor
        stats = SlrStatistics(z=0.0, s=1.0, c=1.0)
        _, _, omega = slr_site(stats, 0.0, 1.0)
        assert omega == OMEGA_CLAMP

    def test_broken_statistics_raise(self):
        stats = SlrStatistics(z=0.0, s=1.0, c=2.0)  # implies omega = -3
        with pytest.raises(InternalConsistencyError):
            slr_site(stats, 0.0, 1.0)


class TestSiteLinearizationValidation:
    def test_rejects_nonpositive_omega(self):
        with pytest.raises(ValueError):
            SiteLinearization(np.ones(2), np.zeros(2), np.array([1.0, 0.0]))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            SiteLinearization(np.array([np.nan]), np.zeros(1), np.ones(1))


@given(
    which=st.sampled_from(["probit", "logit", "nt"]),
    eps=st.floats(0.001, 0.499),
    fbar=st.floats(-8, 8),
    p=st.floats(1e-3, 40),
    y=st.sampled_from([-1, 1]),
)
@settings(max_examples=300, deadline=None)
def test_omega_always_positive(which, eps, fbar, p, y):
    like = {"probit": probit(), "logit": logit(), "nt": noisy_threshold(eps)}[which]
    stats = slr_statistics(like, y, fbar, p)
    _, _, omega = slr_site(stats, fbar, p)
    assert omega > 0
