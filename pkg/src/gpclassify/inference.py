"""Posterior approximation engines over the latent training values.

Three families, each in parallel and/or sequential form:

* posterior linearisation (PL): iterated statistical linear regression
  of each conditional label mean against the current posterior
  marginals.  Site noise variances are positive by construction, so
  every posterior covariance along the way is positive definite.
* expectation propagation (EP): per-site moment matching against the
  tilted distribution of cavity times likelihood.  Cavity variances can
  turn genuinely negative; the clamp/skip policies below contain (but
  cannot cure) that failure mode.
* Laplace: Newton search for the posterior mode with the usual
  B = I + W^1/2 K W^1/2 stabilisation.

All engines accept an optional Gaussian prior mean (the zero vector by
default); the covariance argument doubles as the prior covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from .likelihoods import (
    UnsupportedLikelihoodError,
    channel_stats,
    channel_stats_scalar,
    log_likelihood,
    loglik_grad_hess,
    tilted_moments,
)
from .numerics import PositiveDefiniteError, psd_cholesky
from .slr import SiteLinearization, slr_site_scalar, slr_sites


@dataclass
class GaussianBelief:
    """Gaussian approximation (mean, covariance) to the latent posterior."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def n(self) -> int:
        return self.mean.shape[0]


@dataclass
class EpSite:
    """EP site natural parameters: precisions may go negative pre-clamp."""

    nu: np.ndarray
    tau: np.ndarray


@dataclass
class InferenceReport:
    """Engine output: belief, final sites and convergence diagnostics.

    ``diagnostics`` holds one record per iteration/sweep:
    (iteration, max posterior-mean change, smallest cavity variance seen
    that iteration; smallest marginal variance for the engines that
    have no cavities).  ``events`` records clamp activations and
    negative-cavity encounters as (kind, iteration, site, value).
    """

    belief: GaussianBelief
    sites: SiteLinearization | EpSite
    iterations_run: int
    converged: bool
    diagnostics: list = field(default_factory=list)
    events: list = field(default_factory=list)
    mean_history: list = field(default_factory=list)
    cov_history: list = field(default_factory=list)
    log_marginal: float | None = None

    def first_event(self, kind: str):
        for ev in self.events:
            if ev[0] == kind:
                return ev
        return None


def _rank1_downdate(cov: np.ndarray, col: np.ndarray, scale: float) -> None:
    """In-place cov -= scale * col col'.

    cov is symmetric, so its C-ordered buffer doubles as the F-ordered
    matrix BLAS ger expects; the update itself is symmetric as well.
    """
    out = dger(-scale, col, col, a=cov.T, overwrite_a=1)
    if not np.shares_memory(out, cov):  # layout prevented the in-place path
        cov[:, :] = out.T


def _as_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"observation vector has length {y.shape[0]}, expected {n}")
    return y


def _prior_mean(prior_mean, n: int) -> np.ndarray:
    if prior_mean is None:
        return np.zeros(n)
    mu = np.asarray(prior_mean, dtype=float).reshape(-1)
    if mu.shape[0] != n:
        raise ValueError("prior mean length does not match covariance size")
    return mu


def linear_posterior(
    k: np.ndarray,
    sites: SiteLinearization,
    y,
    prior_mean=None,
) -> GaussianBelief:
    """Exact Gaussian conditioning under affine sites.

    With per-site model y_i = a_i f_i + b_i + noise(omega_i),

        mean = mu0 + K A' (A K A' + Omega)^-1 (y - b - A mu0)
        cov  = K - K A' (A K A' + Omega)^-1 A K

    The innovation matrix is positive definite whenever all omega_i are,
    which is what makes this update unconditionally safe for PL.
    """
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    mu0 = _prior_mean(prior_mean, n)
    a, b, omega = sites.a, sites.b, sites.omega
    s = a[:, None] * k * a[None, :]
    s[np.diag_indices_from(s)] += omega
    factor = psd_cholesky(s)
    ka = k * a[None, :]
    resid = y - b - a * mu0
    mean = mu0 + ka @ factor.solve(resid)
    half = factor.half_solve(ka.T)
    cov = k - half.T @ half
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean, cov)


def _pl_sites(like, y, fbar, pvar):
    """SLR sites of the label channel against the given marginals."""
    z, s, c = channel_stats(like, fbar, pvar)
    a, b, omega = slr_sites(z, s, c, fbar, pvar)
    return SiteLinearization(a, b, omega)


def pl_parallel(
    k: np.ndarray,
    like,
    y,
    max_iters: int = 10,
    tol: float = 1e-6,
    prior_mean=None,
    keep_cov_history: bool = False,
) -> InferenceReport:
    """Iterated posterior linearisation, all sites relinearised per pass.

    Starts from the prior, relinearises every site against the current
    marginals, then performs one joint conditioning step.  Stops when
    the largest posterior-mean change drops below ``tol``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    mu0 = _prior_mean(prior_mean, n)
    mean = mu0.copy()
    cov = k.copy()
    history = [mean.copy()]
    cov_history = []
    diagnostics = []
    sites = None
    converged = False
    iters = 0
    for j in range(1, max_iters + 1):
        sites = _pl_sites(like, y, mean, np.diag(cov).copy())
        belief = linear_posterior(k, sites, y, mu0)
        delta = float(np.max(np.abs(belief.mean - mean)))
        mean, cov = belief.mean, belief.cov
        history.append(mean.copy())
        if keep_cov_history:
            cov_history.append(cov.copy())
        diagnostics.append((j, delta, float(np.min(np.diag(cov)))))
        iters = j
        if delta < tol:
            converged = True
            break
    report = InferenceReport(
        GaussianBelief(mean, cov), sites, iters, converged,
        diagnostics=diagnostics, mean_history=history,
    )
    report.cov_history = cov_history
    return report


def _recompute_from_precision_sites(k, tau, nu, mu0):
    """Posterior (mean, cov) from diagonal site precisions/natural means.

    Uses the B = I + W^1/2 K W^1/2 form when every precision is
    nonnegative; falls back to a general (possibly indefinite) solve when
    raw EP has produced negative site precisions.
    """
    n = k.shape[0]
    if np.all(tau >= 0):
        sw = np.sqrt(tau)
        b = sw[:, None] * k * sw[None, :]
        b[np.diag_indices_from(b)] += 1.0
        factor = psd_cholesky(b)
        half = factor.half_solve(sw[:, None] * k)
        cov = k - half.T @ half
        cov = 0.5 * (cov + cov.T)
        mean = cov @ nu
        if np.any(mu0):
            mean += mu0 - k @ (sw * factor.solve(sw * mu0))
        return mean, cov
    x = np.eye(n) + k * tau[None, :]
    cov = np.linalg.solve(x, k)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ nu
    if np.any(mu0):
        mean += np.linalg.solve(x, mu0)
    return mean, cov


def _ep_evidence(k, like, y, tau, nu, mean, cov):
    """EP approximation of the log marginal likelihood (zero-mean prior).

    Site normalizers are fixed by matching each tilted zeroth moment
    through the converged cavities; the result is the log mass of the
    product of site Gaussians under the prior.  Returns None when a
    cavity is invalid.
    """
    n = k.shape[0]
    tau_f = np.maximum(tau, 1e-10)  # untouched sites act as near-flat factors
    cav_prec = 1.0 / np.diag(cov) - tau
    if np.any(cav_prec <= 0) or np.any(np.diag(cov) <= 0):
        return None
    cav_var = 1.0 / cav_prec
    cav_mean = cav_var * (mean / np.diag(cov) - nu)
    site_var = 1.0 / tau_f
    site_mean = nu / tau_f
    total = 0.0
    for i in range(n):
        log_zhat, _, _ = tilted_moments(like, y[i], cav_mean[i], cav_var[i])
        v = site_var[i] + cav_var[i]
        log_overlap = (
            -0.5 * (site_mean[i] - cav_mean[i]) ** 2 / v
            - 0.5 * math.log(2.0 * math.pi * v)
        )
        total += log_zhat - log_overlap
    m = k + np.diag(site_var)
    try:
        factor = psd_cholesky(m)
    except PositiveDefiniteError:
        return None
    half = factor.half_solve(site_mean)
    total += -0.5 * (
        n * math.log(2.0 * math.pi) + factor.logdet + float(half @ half)
    )
    return total


def _ep_report(k, like, y, tau, nu, mean, cov, iters, converged,
               diagnostics, events, zero_mean_prior):
    log_marginal = None
    if zero_mean_prior:
        log_marginal = _ep_evidence(k, like, y, tau, nu, mean, cov)
    return InferenceReport(
        GaussianBelief(mean, cov), EpSite(nu, tau), max(iters, 1), converged,
        diagnostics=diagnostics, events=events, log_marginal=log_marginal,
    )


def ep_sequential(
    k: np.ndarray,
    like,
    y,
    max_sweeps: int = 10,
    tol: float = 1e-6,
    clamp: float | None = 1e-6,
    prior_mean=None,
    order=None,
    on_negative_cavity: str = "skip",
) -> InferenceReport:
    """Sequential EP with Gaussian sites in natural parameters.

    One sweep visits every site in ``order`` (index order by default),
    recomputing the posterior by a rank-1 update after each site.  A
    negative site precision is floored at ``clamp`` (pass None to study
    raw EP).  A non-positive cavity variance is recorded as an event and
    either skipped or, with ``on_negative_cavity="halt"``, stops the run.
    Negative cavities are genuine EP outcomes, not roundoff.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if clamp is not None and not clamp > 0:
        raise ValueError("clamp must be positive or None")
    if on_negative_cavity not in ("skip", "halt"):
        raise ValueError("on_negative_cavity must be 'skip' or 'halt'")
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    mu0 = _prior_mean(prior_mean, n)
    zero_mean = not np.any(mu0)
    order = list(range(n)) if order is None else list(order)
    nu = np.zeros(n)
    tau = np.zeros(n)
    mean = mu0.copy()
    cov = k.copy()
    diagnostics = []
    events = []
    converged = False
    iters = 0
    for sweep in range(1, max_sweeps + 1):
        iters = sweep
        sweep_start_mean = mean.copy()
        min_cav = math.inf
        for i in order:
            sigma_ii = cov[i, i]
            if sigma_ii <= 0:
                events.append(("negative_marginal", sweep, i, float(sigma_ii)))
                if on_negative_cavity == "halt":
                    return _ep_report(k, like, y, tau, nu, mean, cov, sweep,
                                      False, diagnostics, events, zero_mean)
                continue
            cav_prec = 1.0 / sigma_ii - tau[i]
            if cav_prec <= 0:
                cav_var = 1.0 / cav_prec if cav_prec != 0 else -math.inf
                min_cav = min(min_cav, cav_var)
                events.append(("negative_cavity", sweep, i, float(cav_var)))
                if on_negative_cavity == "halt":
                    return _ep_report(k, like, y, tau, nu, mean, cov, sweep,
                                      False, diagnostics, events, zero_mean)
                continue
            cav_var = 1.0 / cav_prec
            min_cav = min(min_cav, cav_var)
            cav_mean = cav_var * (mean[i] / sigma_ii - nu[i])
            _, t_mean, t_var = tilted_moments(like, y[i], cav_mean, cav_var)
            if not (t_var > 0 and math.isfinite(t_var) and math.isfinite(t_mean)):
                events.append(("bad_tilted", sweep, i, float(t_var)))
                continue
            tau_new = 1.0 / t_var - cav_prec
            nu_new = t_mean / t_var - cav_mean / cav_var
            if clamp is not None and tau_new < clamp:
                events.append(("site_precision_clamped", sweep, i, float(tau_new)))
                tau_new = clamp
            dtau = tau_new - tau[i]
            dnu = nu_new - nu[i]
            denom = 1.0 + dtau * sigma_ii
            if abs(denom) < 1e-14:
                events.append(("singular_update", sweep, i, float(denom)))
                continue
            col = cov[:, i].copy()
            _rank1_downdate(cov, col, dtau / denom)
            mean += col * ((dnu - dtau * mean[i]) / denom)
            tau[i] = tau_new
            nu[i] = nu_new
        try:
            mean, cov = _recompute_from_precision_sites(k, tau, nu, mu0)
        except PositiveDefiniteError:
            raise PositiveDefiniteError(
                "EP posterior lost positive definiteness despite clamping",
                minor_index=0,
            )
        delta = float(np.max(np.abs(mean - sweep_start_mean)))
        diagnostics.append((sweep, delta, min_cav))
        if delta < tol:
            converged = True
            break
    return _ep_report(k, like, y, tau, nu, mean, cov, iters, converged,
                      diagnostics, events, zero_mean)


def ep_parallel(
    k: np.ndarray,
    like,
    y,
    max_iters: int = 10,
    tol: float = 1e-6,
    clamp: float | None = 1e-6,
    prior_mean=None,
    on_negative_cavity: str = "skip",
) -> InferenceReport:
    """Parallel EP: all cavities from the same posterior, one joint update."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if clamp is not None and not clamp > 0:
        raise ValueError("clamp must be positive or None")
    if on_negative_cavity not in ("skip", "halt"):
        raise ValueError("on_negative_cavity must be 'skip' or 'halt'")
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    mu0 = _prior_mean(prior_mean, n)
    zero_mean = not np.any(mu0)
    nu = np.zeros(n)
    tau = np.zeros(n)
    mean = mu0.copy()
    cov = k.copy()
    diagnostics = []
    events = []
    converged = False
    iters = 0
    for it in range(1, max_iters + 1):
        iters = it
        sigma = np.diag(cov).copy()
        new_tau = tau.copy()
        new_nu = nu.copy()
        min_cav = math.inf
        halted = False
        for i in range(n):
            if sigma[i] <= 0:
                events.append(("negative_marginal", it, i, float(sigma[i])))
                if on_negative_cavity == "halt":
                    halted = True
                    break
                continue
            cav_prec = 1.0 / sigma[i] - tau[i]
            if cav_prec <= 0:
                cav_var = 1.0 / cav_prec if cav_prec != 0 else -math.inf
                min_cav = min(min_cav, cav_var)
                events.append(("negative_cavity", it, i, float(cav_var)))
                if on_negative_cavity == "halt":
                    halted = True
                    break
                continue
            cav_var = 1.0 / cav_prec
            min_cav = min(min_cav, cav_var)
            cav_mean = cav_var * (mean[i] / sigma[i] - nu[i])
            _, t_mean, t_var = tilted_moments(like, y[i], cav_mean, cav_var)
            if not (t_var > 0 and math.isfinite(t_var) and math.isfinite(t_mean)):
                events.append(("bad_tilted", it, i, float(t_var)))
                continue
            tau_i = 1.0 / t_var - cav_prec
            nu_i = t_mean / t_var - cav_mean / cav_var
            if clamp is not None and tau_i < clamp:
                events.append(("site_precision_clamped", it, i, float(tau_i)))
                tau_i = clamp
            new_tau[i] = tau_i
            new_nu[i] = nu_i
        if halted:
            return _ep_report(k, like, y, tau, nu, mean, cov, it, False,
                              diagnostics, events, zero_mean)
        tau, nu = new_tau, new_nu
        old_mean = mean
        try:
            mean, cov = _recompute_from_precision_sites(k, tau, nu, mu0)
        except PositiveDefiniteError:
            raise PositiveDefiniteError(
                "EP posterior lost positive definiteness despite clamping",
                minor_index=0,
            )
        delta = float(np.max(np.abs(mean - old_mean)))
        diagnostics.append((it, delta, min_cav))
        if delta < tol:
            converged = True
            break
    return _ep_report(k, like, y, tau, nu, mean, cov, iters, converged,
                      diagnostics, events, zero_mean)


def pl_sequential(
    k: np.ndarray,
    like,
    y,
    max_sweeps: int = 10,
    tol: float = 1e-6,
    prior_mean=None,
    order=None,
    keep_cov_history: bool = False,
) -> InferenceReport:
    """Sequential PL: posterior recomputed after every single-site SLR.

    Each affine site enters the posterior as the equivalent Gaussian
    factor with precision a^2/omega >= 0, so the rank-1 denominators stay
    positive and the posterior stays positive definite unconditionally.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    mu0 = _prior_mean(prior_mean, n)
    order = list(range(n)) if order is None else list(order)
    a_arr = np.zeros(n)
    b_arr = np.zeros(n)
    om_arr = np.ones(n)
    tau = np.zeros(n)
    nu = np.zeros(n)
    mean = mu0.copy()
    cov = k.copy()
    diagnostics = []
    history = [mean.copy()]
    cov_history = []
    converged = False
    iters = 0
    for sweep in range(1, max_sweeps + 1):
        iters = sweep
        sweep_start_mean = mean.copy()
        min_var = math.inf
        for i in order:
            sigma_ii = cov[i, i]
            min_var = min(min_var, sigma_ii)
            z, s, c = channel_stats_scalar(like, mean[i], sigma_ii)
            a_i, b_i, om_i = slr_site_scalar(z, s, c, mean[i], sigma_ii)
            a_arr[i], b_arr[i], om_arr[i] = a_i, b_i, om_i
            tau_new = a_i * a_i / om_i
            nu_new = a_i * (y[i] - b_i) / om_i
            dtau = tau_new - tau[i]
            dnu = nu_new - nu[i]
            denom = 1.0 + dtau * sigma_ii
            col = cov[:, i].copy()
            _rank1_downdate(cov, col, dtau / denom)
            mean += col * ((dnu - dtau * mean[i]) / denom)
            tau[i] = tau_new
            nu[i] = nu_new
        mean, cov = _recompute_from_precision_sites(k, tau, nu, mu0)
        delta = float(np.max(np.abs(mean - sweep_start_mean)))
        history.append(mean.copy())
        if keep_cov_history:
            cov_history.append(cov.copy())
        diagnostics.append((sweep, delta, min_var))
        if delta < tol:
            converged = True
            break
    sites = SiteLinearization(a_arr.copy(), b_arr.copy(), om_arr.copy())
    report = InferenceReport(
        GaussianBelief(mean, cov), sites, iters, converged,
        diagnostics=diagnostics, mean_history=history,
    )
    report.cov_history = cov_history
    return report


def laplace(
    k: np.ndarray,
    like,
    y,
    max_newton_iters: int = 50,
    tol: float = 1e-6,
) -> InferenceReport:
    """Laplace approximation: Newton search for the posterior mode.

    Works only for likelihoods with informative gradients (probit,
    logit, affine).  Iterates the stabilised Newton step with step
    halving whenever the objective would decrease.
    """
    if getattr(like, "kind", None) == "noisy_threshold":
        raise UnsupportedLikelihoodError(
            "Laplace cannot handle the noisy threshold likelihood: its "
            "gradient is zero almost everywhere"
        )
    if max_newton_iters < 1:
        raise ValueError("max_newton_iters must be >= 1")
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    y = _as_labels(y, n)
    f = np.zeros(n)
    alpha = np.zeros(n)  # alpha = K^-1 f, maintained so psi never needs K^-1
    psi = float(np.sum(log_likelihood(like, y, f)))
    diagnostics = []
    converged = False
    iters = 0
    factor = None
    sw = None
    for it in range(1, max_newton_iters + 1):
        iters = it
        grad, w = loglik_grad_hess(like, y, f)
        sw = np.sqrt(np.maximum(w, 0.0))
        bmat = sw[:, None] * k * sw[None, :]
        bmat[np.diag_indices_from(bmat)] += 1.0
        factor = psd_cholesky(bmat)
        bvec = w * f + grad
        alpha_new = bvec - sw * factor.solve(sw * (k @ bvec))
        step = alpha_new - alpha
        t = 1.0
        accepted = False
        for _ in range(12):
            alpha_t = alpha + t * step
            f_t = k @ alpha_t
            psi_t = float(-0.5 * (alpha_t @ f_t) + np.sum(log_likelihood(like, y, f_t)))
            if psi_t > psi or np.allclose(alpha_t, alpha):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        delta = float(np.max(np.abs(f_t - f)))
        alpha, f, psi = alpha_t, f_t, psi_t
        diagnostics.append((it, delta, math.nan))
        if delta < tol:
            converged = True
            break
    # refresh curvature at the mode
    grad, w = loglik_grad_hess(like, y, f)
    sw = np.sqrt(np.maximum(w, 0.0))
    bmat = sw[:, None] * k * sw[None, :]
    bmat[np.diag_indices_from(bmat)] += 1.0
    factor = psd_cholesky(bmat)
    half = factor.half_solve(sw[:, None] * k)
    cov = k - half.T @ half
    cov = 0.5 * (cov + cov.T)
    log_marginal = (
        -0.5 * float(alpha @ f)
        + float(np.sum(log_likelihood(like, y, f)))
        - 0.5 * factor.logdet
    )
    w_floored = np.maximum(w, 1e-10)
    pseudo = f + grad / w_floored
    sites = SiteLinearization(np.ones(n), y - pseudo, 1.0 / w_floored)
    return InferenceReport(
        GaussianBelief(f, cov), sites, max(iters, 1), converged,
        diagnostics=diagnostics, log_marginal=log_marginal,
    )
