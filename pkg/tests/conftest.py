"""Shared test fixtures and independent oracles.

The oracles here deliberately avoid the package's own quadrature and
linear algebra: they use scipy.integrate / scipy.stats / dense numpy
grids so that closed-form implementations are checked against an
independent route.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
FIXTURES = DATA_DIR / "fixtures"


def dataset_path_or_skip(name: str) -> Path:
    """Real benchmark datasets are user-supplied, never vendored."""
    path = DATA_DIR / name
    if not path.exists():
        pytest.skip(
            f"dataset {name} not present under {DATA_DIR}; "
            "run scripts/fetch_datasets.py (needs network access) to obtain it"
        )
    return path


def conditional_mean_fn(like):
    """The channel's conditional mean f -> E[y|f] as a plain function."""
    kind = getattr(like, "kind", None)
    if kind == "probit":
        return lambda f: 2.0 * norm.cdf(f) - 1.0
    if kind == "logit":
        return lambda f: np.tanh(0.5 * f)
    if kind == "noisy_threshold":
        eps = like.epsilon
        return lambda f: (1.0 - 2.0 * eps) * np.sign(f)
    raise ValueError(f"no oracle channel for {like!r}")


def oracle_channel_stats(like, fbar: float, p: float):
    """Brute-force (z, s, c) by adaptive quadrature, split at the origin.

    z = E[E[y|f]],  s = C[E[y|f]] + E[C[y|f]],  c = C[f, E[y|f]],
    all under f ~ N(fbar, p).  The split at 0 keeps the noisy-threshold
    step integrable to high accuracy.
    """
    m = conditional_mean_fn(like)
    sd = math.sqrt(p)
    lo, hi = fbar - 40.0 * sd, fbar + 40.0 * sd

    def integrate(g):
        total = 0.0
        pieces = sorted({lo, min(0.0, hi), max(0.0, lo), hi})
        for a, b in zip(pieces[:-1], pieces[1:]):
            if b > a:
                val, _ = quad(g, a, b, epsabs=1e-13, epsrel=1e-11, limit=400)
                total += val
        return total

    w = lambda f: norm.pdf(f, fbar, sd)
    z = integrate(lambda f: m(f) * w(f))
    m2 = integrate(lambda f: m(f) ** 2 * w(f))
    cond_var = integrate(lambda f: (1.0 - m(f) ** 2) * w(f))
    c = integrate(lambda f: (f - fbar) * m(f) * w(f))
    s = (m2 - z**2) + cond_var
    return z, s, c


def quadrature_mse(like, a: float, b: float, fbar: float, p: float) -> float:
    """Mean square error of the affine fit (a, b) under N(fbar, p).

    E[(E[y|f] - a f - b)^2] + E[C[y|f]] by adaptive quadrature split at
    the origin, so discontinuous channels are integrated accurately.
    """
    m = conditional_mean_fn(like)
    sd = math.sqrt(p)
    lo, hi = fbar - 32.0 * sd, fbar + 32.0 * sd
    pieces = sorted({lo, min(0.0, hi), max(0.0, lo), hi})
    total = 0.0
    for u, v in zip(pieces[:-1], pieces[1:]):
        if v > u:
            val, _ = quad(
                lambda f: ((m(f) - a * f - b) ** 2 + (1.0 - m(f) ** 2))
                * norm.pdf(f, fbar, sd),
                u, v, limit=400,
            )
            total += val
    return total


def oracle_posterior_1d(loglik_fn, prior_mean: float, prior_var: float,
                        span: float = 30.0):
    """Adaptive-quadrature moments and evidence of lik(f) * N(f; mean, var).

    Integrates piecewise around the origin so that discontinuous
    likelihoods (noisy threshold) are handled to full accuracy.
    """
    sd = math.sqrt(prior_var)
    lo, hi = prior_mean - span * sd, prior_mean + span * sd
    pieces = sorted({lo, min(0.0, hi), max(0.0, lo), hi})

    def integrate(g):
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            if b > a:
                val, _ = quad(g, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
                total += val
        return total

    w = lambda f: np.exp(loglik_fn(np.asarray(f, dtype=float))) * norm.pdf(f, prior_mean, sd)
    zsum = integrate(w)
    mean = integrate(lambda f: f * w(f)) / zsum
    var = integrate(lambda f: f**2 * w(f)) / zsum - mean**2
    return mean, var, math.log(zsum)


def oracle_posterior_2d(loglik_fn, prior_mean, prior_cov, span=8.0, num=701):
    """Dense-grid moments/evidence for a 2-d latent posterior (plain numpy)."""
    mu = np.asarray(prior_mean, float)
    cov = np.asarray(prior_cov, float)
    sd = np.sqrt(np.diag(cov))
    xs = np.linspace(mu[0] - span * sd[0], mu[0] + span * sd[0], num)
    ys = np.linspace(mu[1] - span * sd[1], mu[1] + span * sd[1], num)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    prec = np.linalg.inv(cov)
    dx_, dy_ = xx - mu[0], yy - mu[1]
    quad_form = prec[0, 0] * dx_**2 + 2 * prec[0, 1] * dx_ * dy_ + prec[1, 1] * dy_**2
    log_prior = -0.5 * quad_form - math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov))
    lp = log_prior + loglik_fn(xx, yy)
    peak = lp.max()
    w = np.exp(lp - peak)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    zsum = w.sum() * cell
    log_evidence = math.log(zsum) + peak
    w /= w.sum()
    mean = np.array([(w * xx).sum(), (w * yy).sum()])
    cxx = (w * (xx - mean[0]) ** 2).sum()
    cyy = (w * (yy - mean[1]) ** 2).sum()
    cxy = (w * (xx - mean[0]) * (yy - mean[1])).sum()
    return mean, np.array([[cxx, cxy], [cxy, cyy]]), log_evidence


@pytest.fixture(scope="session")
def blobs_csv() -> Path:
    return FIXTURES / "blobs.csv"


@pytest.fixture(scope="session")
def fixture_config() -> Path:
    return FIXTURES / "fixture.cfg"
