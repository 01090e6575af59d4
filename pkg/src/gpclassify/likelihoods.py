"""Binary label models and their Gaussian-expectation statistics.

Three label likelihoods are supported for y in {-1, +1}:

* probit:           p(y|f) = Phi(y f)
* logit:            p(y=1|f) = 1 / (1 + exp(-f))
* noisy threshold:  p(y|f) = eps + (1 - 2 eps) H(y f),  H(0) = 0

Each model exposes the conditional label moments E[y|f], C[y|f], the
statistics of those moments under a Gaussian on f (closed form for
probit and noisy threshold, Gauss-Hermite quadrature for logit), and
the tilted moments needed by expectation propagation.

:class:`AffineChannel` is a linear-Gaussian observation model
(E[y|f] = a f + b, constant conditional variance).  Statistical
linearisation is exact on it, which makes it the canonical validation
channel for every inference engine in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import log_ndtr, ndtr

from .numerics import QuadratureRule, gauss_hermite_rule

_KINDS = ("probit", "logit", "noisy_threshold")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class UnsupportedLikelihoodError(ValueError):
    """The requested operation is undefined for this likelihood."""


@dataclass(frozen=True)
class LikelihoodModel:
    """Tagged choice of label model.

    ``epsilon`` is the flip probability of the noisy threshold model and
    must be present exactly for that kind; ``quad_order`` controls the
    Gauss-Hermite order used for the logit's intractable expectations.
    """

    kind: str
    epsilon: float | None = None
    quad_order: int = 10

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown likelihood kind {self.kind!r}")
        if self.kind == "noisy_threshold":
            if self.epsilon is None or not 0.0 < self.epsilon < 0.5:
                raise ValueError(
                    f"noisy_threshold requires epsilon in (0, 0.5), got {self.epsilon}"
                )
        elif self.epsilon is not None:
            raise ValueError("epsilon is only meaningful for noisy_threshold")
        if self.quad_order < 1:
            raise ValueError(f"quad_order must be >= 1, got {self.quad_order}")


def probit() -> LikelihoodModel:
    return LikelihoodModel("probit")


def logit(quad_order: int = 10) -> LikelihoodModel:
    return LikelihoodModel("logit", quad_order=quad_order)


def noisy_threshold(epsilon: float) -> LikelihoodModel:
    return LikelihoodModel("noisy_threshold", epsilon=epsilon)


@dataclass(frozen=True)
class AffineChannel:
    """Linear-Gaussian validation channel: y = slope*f + intercept + noise."""

    slope: float
    intercept: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")


@dataclass(frozen=True)
class SlrStatistics:
    """Gaussian-expectation statistics of a conditional-moment channel.

    ``z`` is the expected conditional mean, ``s`` the total spread
    (variance of the conditional mean plus expected conditional
    variance) and ``c`` the input/conditional-mean covariance.
    """

    z: float
    s: float
    c: float


@lru_cache(maxsize=None)
def _rule(order: int) -> QuadratureRule:
    return gauss_hermite_rule(order)


def _npdf(x):
    return np.exp(-0.5 * np.square(x)) / np.sqrt(2.0 * np.pi)


def cond_moments(like, f):
    """Conditional label moments (E[y|f], C[y|f]) at latent value(s) f.

    For the binary models the mean is p(+1|f) - p(-1|f) and, since
    y^2 = 1, the variance is 1 - mean^2.
    """
    f = np.asarray(f, dtype=float)
    if isinstance(like, AffineChannel):
        mean = like.slope * f + like.intercept
        return mean, np.full_like(mean, like.noise_var)
    if like.kind == "probit":
        mean = 2.0 * ndtr(f) - 1.0
    elif like.kind == "logit":
        mean = np.tanh(0.5 * f)
    else:  # noisy threshold; sign(0) = 0 reflects H(0) = 0 for both labels
        mean = (1.0 - 2.0 * like.epsilon) * np.sign(f)
    return mean, 1.0 - mean**2


def channel_stats(like, fbar, p):
    """Vectorized (z, s, c) of the conditional mean under N(fbar, p).

    z = E[E[y|f]], s = C[E[y|f]] + E[C[y|f]], c = C[f, E[y|f]].  For the
    +/-1 label models E[y^2|f] = 1, so s = 1 - z^2 identically; the
    quadrature route for the logit uses the same identity.
    """
    fbar = np.asarray(fbar, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("marginal variance must be positive")
    if isinstance(like, AffineChannel):
        z = like.slope * fbar + like.intercept
        c = like.slope * p
        s = like.slope**2 * p + like.noise_var
        return z, s, c
    if like.kind == "probit":
        u = fbar / np.sqrt(1.0 + p)
        z = 2.0 * ndtr(u) - 1.0
        c = 2.0 * p / np.sqrt(1.0 + p) * _npdf(u)
    elif like.kind == "noisy_threshold":
        u = fbar / np.sqrt(p)
        z = (1.0 - 2.0 * like.epsilon) * (2.0 * ndtr(u) - 1.0)
        c = 2.0 * (1.0 - 2.0 * like.epsilon) * np.sqrt(p) * _npdf(u)
    else:  # logit
        rule = _rule(like.quad_order)
        dev = np.sqrt(p)[..., None] * rule.nodes
        m = np.tanh(0.5 * (fbar[..., None] + dev))
        z = m @ rule.weights
        c = (dev * m) @ rule.weights
    return z, 1.0 - z**2, c


def channel_stats_scalar(like, fbar: float, p: float):
    """Scalar fast path of :func:`channel_stats` for per-site sweeps.

    Identical formulas; plain math avoids the ufunc dispatch overhead
    that dominates sequential sweeps over hundreds of sites.
    """
    if isinstance(like, AffineChannel):
        z = like.slope * fbar + like.intercept
        return z, like.slope**2 * p + like.noise_var, like.slope * p
    if like.kind == "probit":
        u = fbar / math.sqrt(1.0 + p)
        z = 2.0 * _ndtr_scalar(u) - 1.0
        c = 2.0 * p / math.sqrt(1.0 + p) * math.exp(-0.5 * u * u - _LOG_SQRT_2PI)
    elif like.kind == "noisy_threshold":
        u = fbar / math.sqrt(p)
        z = (1.0 - 2.0 * like.epsilon) * (2.0 * _ndtr_scalar(u) - 1.0)
        c = (
            2.0 * (1.0 - 2.0 * like.epsilon) * math.sqrt(p)
            * math.exp(-0.5 * u * u - _LOG_SQRT_2PI)
        )
    else:
        rule = _rule(like.quad_order)
        sd = math.sqrt(p)
        z = 0.0
        c = 0.0
        for node, weight in zip(rule.nodes, rule.weights):
            dev = sd * node
            m = math.tanh(0.5 * (fbar + dev))
            z += weight * m
            c += weight * dev * m
    return z, 1.0 - z * z, c


def _ndtr_scalar(u: float) -> float:
    return 0.5 * math.erfc(-u / math.sqrt(2.0))


def slr_statistics(like, y: int, fbar: float, p: float) -> SlrStatistics:
    """SLR statistics of a single site, folding in the observed label.

    The statistics describe the channel of w = y * label, which flips
    the sign of the symmetric label models: for y = -1 both z and c are
    negated while s is unchanged.
    """
    if not p > 0:
        raise ValueError(f"marginal variance must be positive, got {p}")
    if y not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {y}")
    z, s, c = channel_stats(like, float(fbar), float(p))
    if y == -1:
        z, c = -z, -c
    return SlrStatistics(float(z), float(s), float(c))


def expected_label(like, mean, var):
    """E[y*] after integrating the conditional mean over N(mean, var).

    This is the z statistic of :func:`channel_stats`; degenerate
    variances fall back to the conditional mean at the point.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    out = np.empty_like(mean)
    ok = var > 1e-30
    if np.any(ok):
        z, _, _ = channel_stats(like, mean[ok], var[ok])
        out[ok] = z
    if np.any(~ok):
        out[~ok] = cond_moments(like, mean[~ok])[0]
    return out


def log_likelihood(like, y, f):
    """log p(y | f), elementwise."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if isinstance(like, AffineChannel):
        r = y - like.slope * f - like.intercept
        return -0.5 * r**2 / like.noise_var - 0.5 * np.log(like.noise_var) - _LOG_SQRT_2PI
    if like.kind == "probit":
        return log_ndtr(y * f)
    if like.kind == "logit":
        return -np.logaddexp(0.0, -y * f)
    eps = like.epsilon
    return np.where(y * f > 0, np.log1p(-eps), np.log(eps))


def loglik_grad_hess(like, y, f):
    """(d log p / df, -d^2 log p / df^2), elementwise.

    The noisy threshold has zero gradient almost everywhere, which is
    exactly what breaks Newton/Laplace, so it is rejected here.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if isinstance(like, AffineChannel):
        grad = like.slope * (y - like.slope * f - like.intercept) / like.noise_var
        w = np.full_like(f, like.slope**2 / like.noise_var)
        return grad, w
    if like.kind == "probit":
        # r = phi(f)/Phi(yf), computed in log-space to survive the tails
        log_r = -0.5 * f**2 - _LOG_SQRT_2PI - log_ndtr(y * f)
        r = np.exp(log_r)
        return y * r, r * (r + y * f)
    if like.kind == "logit":
        pi = 0.5 * (1.0 + np.tanh(0.5 * f))
        return 0.5 * (y + 1.0) - pi, pi * (1.0 - pi)
    raise UnsupportedLikelihoodError(
        "the noisy threshold likelihood has zero gradient almost everywhere"
    )


def tilted_moments(like, y, cav_mean, cav_var):
    """(log Z, mean, variance) of p(y|f) * N(f; cav_mean, cav_var).

    Closed form for probit, noisy threshold and the affine channel;
    Gauss-Hermite quadrature of order ``like.quad_order`` for the logit.
    """
    mu = float(cav_mean)
    s2 = float(cav_var)
    if not s2 > 0:
        raise ValueError(f"cavity variance must be positive, got {s2}")
    if isinstance(like, AffineChannel):
        a, b0, om = like.slope, like.intercept, like.noise_var
        denom = a**2 * s2 + om
        resid = float(y) - a * mu - b0
        log_z = -0.5 * (resid**2 / denom + np.log(denom)) - _LOG_SQRT_2PI
        gain = s2 * a / denom
        return log_z, mu + gain * resid, s2 - gain * a * s2
    if like.kind == "probit":
        u = float(y) * mu / math.sqrt(1.0 + s2)
        log_z = float(log_ndtr(u))
        r = math.exp(-0.5 * u * u - _LOG_SQRT_2PI - log_z)
        mean = mu + float(y) * s2 * r / math.sqrt(1.0 + s2)
        var = s2 - s2**2 * r * (u + r) / (1.0 + s2)
        return log_z, mean, var
    if like.kind == "noisy_threshold":
        eps = like.epsilon
        sc = math.sqrt(s2)
        u = float(y) * mu / sc
        big = eps + (1.0 - 2.0 * eps) * float(ndtr(u))
        phi = math.exp(-0.5 * u * u - _LOG_SQRT_2PI)
        mean = mu + float(y) * (1.0 - 2.0 * eps) * sc * phi / big
        var = (
            s2
            - (1.0 - 2.0 * eps) * (float(y) * mu) * sc * phi / big
            - (1.0 - 2.0 * eps) ** 2 * s2 * phi**2 / big**2
        )
        return math.log(big), mean, var
    rule = _rule(like.quad_order)
    f = mu + math.sqrt(s2) * rule.nodes
    lik = np.exp(log_likelihood(like, float(y), f))
    z = float(rule.weights @ lik)
    mean = float(rule.weights @ (f * lik)) / z
    var = float(rule.weights @ (f**2 * lik)) / z - mean**2
    return math.log(z), mean, var
