"""Model-level API: evidence approximation, fitting, prediction, save/load.

Fitting maximizes an approximation of the log marginal likelihood over
the kernel log-hyperparameters with BFGS and finite-difference
gradients, starting from (ln 10, ln 1).  Each objective evaluation
reruns the chosen inference engine from the prior, so the objective is
a deterministic function of the hyperparameters.  The PL engines use
the linearisation-based evidence below; EP and Laplace use their own
standard evidence approximations.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .inference import (
    EpSite,
    GaussianBelief,
    InferenceReport,
    ep_parallel,
    ep_sequential,
    laplace,
    pl_parallel,
    pl_sequential,
)
from .kernel import Hyperparams, gram_cross, gram_train
from .likelihoods import (
    LikelihoodModel,
    UnsupportedLikelihoodError,
    expected_label,
    log_likelihood,
)
from .numerics import (
    NumericFailureError,
    PositiveDefiniteError,
    QuadratureRule,
    blas_single_thread,
    gauss_hermite_rule,
    log_gaussian_density,
    psd_cholesky,
)
from .optimize import minimize_bfgs
from .slr import InternalConsistencyError, SiteLinearization

ENGINES = ("pl_parallel", "pl_sequential", "ep_parallel", "ep_sequential", "laplace")

_OBJECTIVE_ERRORS = (
    PositiveDefiniteError,
    NumericFailureError,
    InternalConsistencyError,
    np.linalg.LinAlgError,
    FloatingPointError,
    ValueError,
)


class FitFailureError(RuntimeError):
    """No hyperparameter setting produced a usable model."""


@dataclass(frozen=True)
class FitConfig:
    """Knobs for :func:`fit`; defaults follow the benchmark protocol."""

    engine: str = "pl_parallel"
    optimize: bool = True
    init_log_sigma1_sq: float = math.log(10.0)
    init_log_ell: float = 0.0
    sigma2_sq: float = 0.1
    max_opt_iters: int = 50
    gtol: float = 1e-5
    fd_step: float = 1e-5
    max_inference_iters: int = 10
    max_newton_iters: int = 50
    inference_tol: float = 1e-6
    ep_clamp: float = 1e-6
    quad_order: int = 10

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; choose from {ENGINES}")


@dataclass
class FittedModel:
    """A trained classifier: hyperparameters, sites and training belief."""

    hp: Hyperparams
    like: LikelihoodModel
    x_train: np.ndarray
    y_train: np.ndarray
    sites: SiteLinearization
    belief: GaussianBelief
    log_marginal: float
    engine: str = "pl_parallel"


@dataclass
class Prediction:
    """Latent predictive moments and the induced label distribution."""

    latent_mean: np.ndarray
    latent_var: np.ndarray
    prob_positive: np.ndarray
    expected_label: np.ndarray


def log_marginal_pl(
    k: np.ndarray,
    sites: SiteLinearization,
    belief: GaussianBelief,
    like,
    y,
    rule: QuadratureRule,
) -> float:
    """Evidence approximation from a converged linearisation.

    The affine sites make the model linear-Gaussian, whose evidence
    N(y; b, A K A' + Omega) is exact; a per-site 1-d correction factor
    integrates the ratio of true to Gaussian site likelihood against the
    posterior marginal.  Each correction integrand is evaluated in
    log-space and combined by log-sum-exp.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b, omega = sites.a, sites.b, sites.omega
    s = a[:, None] * k * a[None, :]
    s[np.diag_indices_from(s)] += omega
    base = log_gaussian_density(y, b, psd_cholesky(s))
    w_diag = np.diag(belief.cov)
    # all per-site 1-d integrals share the node grid: (n, order) arrays
    f = belief.mean[:, None] + np.sqrt(w_diag)[:, None] * rule.nodes[None, :]
    resid = y[:, None] - a[:, None] * f - b[:, None]
    log_site = (
        -0.5 * resid**2 / omega[:, None]
        - 0.5 * np.log(2.0 * math.pi * omega)[:, None]
    )
    log_ratio = log_likelihood(like, y[:, None], f) - log_site
    log_corr = logsumexp(np.log(rule.weights)[None, :] + log_ratio, axis=1)
    if not np.all(np.isfinite(log_corr)):
        i = int(np.nonzero(~np.isfinite(log_corr))[0][0])
        raise NumericFailureError(
            f"correction integral for site {i} is not positive/finite"
        )
    return float(base + log_corr.sum())


def run_engine(engine: str, k: np.ndarray, like, y, config: FitConfig) -> InferenceReport:
    """Dispatch one inference engine run under the fit configuration."""
    if engine == "pl_parallel":
        return pl_parallel(k, like, y, config.max_inference_iters, config.inference_tol)
    if engine == "pl_sequential":
        return pl_sequential(k, like, y, config.max_inference_iters, config.inference_tol)
    if engine == "ep_parallel":
        return ep_parallel(
            k, like, y, config.max_inference_iters, config.inference_tol,
            clamp=config.ep_clamp,
        )
    if engine == "ep_sequential":
        return ep_sequential(
            k, like, y, config.max_inference_iters, config.inference_tol,
            clamp=config.ep_clamp,
        )
    if engine == "laplace":
        return laplace(k, like, y, config.max_newton_iters, config.inference_tol)
    raise ValueError(f"unknown engine {engine!r}")


def _unified_sites(report: InferenceReport, y: np.ndarray) -> SiteLinearization:
    """Express any engine's sites as affine sites for shared prediction.

    EP's Gaussian site N(f_i; nu/tau, 1/tau) is the affine site with
    unit slope, offset y_i - nu_i/tau_i and noise 1/tau_i; Laplace
    already produces pseudo-observation sites in that form.
    """
    if isinstance(report.sites, SiteLinearization):
        return report.sites
    ep: EpSite = report.sites
    tau = np.maximum(ep.tau, 1e-10)
    site_mean = ep.nu / tau
    return SiteLinearization(np.ones_like(tau), y - site_mean, 1.0 / tau)


def _evidence(engine, k, like, y, report, rule) -> float | None:
    if engine in ("pl_parallel", "pl_sequential"):
        return log_marginal_pl(k, report.sites, report.belief, like, y, rule)
    return report.log_marginal


def fit(x, y, like, config: FitConfig = FitConfig()) -> FittedModel:
    """Train on (x, y): optimize hyperparameters, run inference at the optimum."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (n, d) with one row per label")
    if x.shape[0] < 2:
        raise ValueError("need at least two training points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    rule = gauss_hermite_rule(config.quad_order)

    def objective(theta):
        try:
            hp = Hyperparams(theta[0], theta[1], config.sigma2_sq)
            k = gram_train(x, hp)
            report = run_engine(config.engine, k, like, y, config)
            value = _evidence(config.engine, k, like, y, report, rule)
        except UnsupportedLikelihoodError:
            raise  # configuration problem, not a bad hyperparameter
        except _OBJECTIVE_ERRORS:
            return np.inf
        if value is None or not math.isfinite(value):
            return np.inf
        return -value

    x0 = np.array([config.init_log_sigma1_sq, config.init_log_ell])
    with blas_single_thread():
        if config.optimize:
            result = minimize_bfgs(
                objective, x0,
                max_iters=config.max_opt_iters, gtol=config.gtol,
                fd_step=config.fd_step,
            )
            theta, best = result.x, result.fun
        else:
            theta, best = x0, objective(x0)
        if not math.isfinite(best):
            raise FitFailureError(
                f"every objective evaluation failed for engine {config.engine!r} "
                f"starting from theta={x0}"
            )
        hp = Hyperparams(float(theta[0]), float(theta[1]), config.sigma2_sq)
        k = gram_train(x, hp)
        report = run_engine(config.engine, k, like, y, config)
        value = _evidence(config.engine, k, like, y, report, rule)
    sites = _unified_sites(report, y)
    return FittedModel(hp, like, x, y, sites, report.belief,
                       float(value), config.engine)


def predict_latent(model: FittedModel, kstar: np.ndarray, kss_diag: np.ndarray):
    """Latent predictive moments from explicit Gram blocks.

    Reuses the training sites: with S = A K A' + Omega,

        mean* = (A K*)' S^-1 (y - b)
        var*  = diag(K**) - columns of (A K*)' S^-1 (A K*)
    """
    k = gram_train(model.x_train, model.hp)
    a, b, omega = model.sites.a, model.sites.b, model.sites.omega
    s = a[:, None] * k * a[None, :]
    s[np.diag_indices_from(s)] += omega
    factor = psd_cholesky(s)
    akstar = a[:, None] * kstar
    mean = akstar.T @ factor.solve(model.y_train - b)
    half = factor.half_solve(akstar)
    var = np.maximum(np.asarray(kss_diag, dtype=float) - np.sum(half**2, axis=0), 0.0)
    return mean, var


def predict(model: FittedModel, xstar, include_jitter: bool = True) -> Prediction:
    """Predict latent moments and label probabilities at new inputs."""
    xstar = np.asarray(xstar, dtype=float)
    if xstar.ndim != 2 or xstar.shape[1] != model.x_train.shape[1]:
        raise ValueError(
            f"xstar must be (m, {model.x_train.shape[1]}), got {xstar.shape}"
        )
    kstar = gram_cross(model.x_train, xstar, model.hp)
    kss_diag = np.full(
        xstar.shape[0],
        model.hp.sigma1_sq + (model.hp.sigma2_sq if include_jitter else 0.0),
    )
    mean, var = predict_latent(model, kstar, kss_diag)
    exp_label = expected_label(model.like, mean, var)
    return Prediction(mean, var, 0.5 * (exp_label + 1.0), exp_label)


def predict_labels(pred: Prediction) -> np.ndarray:
    """Hard labels from expected labels; the tie at zero goes to +1."""
    return np.where(pred.expected_label >= 0.0, 1, -1)


# -- plain-text model persistence -------------------------------------------

_FORMAT_HEADER = "gpclassify-model v1"


def _write_block(out, name, array):
    array = np.atleast_2d(np.asarray(array, dtype=float))
    out.write(f"{name}:\n")
    for row in array:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_model(model: FittedModel, path) -> None:
    """Serialize to a documented plain-text format (see README)."""
    out = io.StringIO()
    out.write(_FORMAT_HEADER + "\n")
    out.write(f"engine {model.engine}\n")
    out.write(f"kind {model.like.kind}\n")
    if model.like.epsilon is not None:
        out.write(f"epsilon {model.like.epsilon!r}\n")
    out.write(f"quad_order {model.like.quad_order}\n")
    out.write(f"log_sigma1_sq {model.hp.log_sigma1_sq!r}\n")
    out.write(f"log_ell {model.hp.log_ell!r}\n")
    out.write(f"sigma2_sq {model.hp.sigma2_sq!r}\n")
    out.write(f"log_marginal {model.log_marginal!r}\n")
    n, d = model.x_train.shape
    out.write(f"n {n}\n")
    out.write(f"d {d}\n")
    _write_block(out, "x_train", model.x_train)
    _write_block(out, "y", model.y_train)
    _write_block(out, "site_a", model.sites.a)
    _write_block(out, "site_b", model.sites.b)
    _write_block(out, "site_omega", model.sites.omega)
    _write_block(out, "belief_mean", model.belief.mean)
    _write_block(out, "belief_cov", model.belief.cov)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(out.getvalue())


def load_model(path) -> FittedModel:
    """Load a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ValueError(f"not a gpclassify model file: {path}")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].endswith(":"):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    blocks = {}
    while i < len(lines):
        name = lines[i][:-1]
        i += 1
        rows = []
        while i < len(lines) and lines[i] and not lines[i].endswith(":"):
            rows.append([float(v) for v in lines[i].split()])
            i += 1
        blocks[name] = np.array(rows)
    like = LikelihoodModel(
        header["kind"],
        epsilon=float(header["epsilon"]) if "epsilon" in header else None,
        quad_order=int(header["quad_order"]),
    )
    hp = Hyperparams(
        float(header["log_sigma1_sq"]),
        float(header["log_ell"]),
        float(header["sigma2_sq"]),
    )
    n = int(header["n"])
    sites = SiteLinearization(
        blocks["site_a"].reshape(-1),
        blocks["site_b"].reshape(-1),
        blocks["site_omega"].reshape(-1),
    )
    belief = GaussianBelief(blocks["belief_mean"].reshape(-1), blocks["belief_cov"])
    if belief.cov.shape != (n, n):
        raise ValueError("belief covariance block has the wrong shape")
    return FittedModel(
        hp, like, blocks["x_train"].reshape(n, -1), blocks["y"].reshape(-1),
        sites, belief, float(header["log_marginal"]), header.get("engine", "pl_parallel"),
    )
