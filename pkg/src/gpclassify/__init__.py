"""Gaussian process binary classification.

Approximate inference by posterior linearisation (PL), expectation
propagation (EP) and Laplace, over probit, logit and noisy-threshold
label models, with marginal-likelihood hyperparameter estimation and a
cross-validation benchmark harness.
"""

from .data import (
    Dataset,
    FoldPlan,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    make_folds,
)
from .inference import (
    EpSite,
    GaussianBelief,
    InferenceReport,
    ep_parallel,
    ep_sequential,
    laplace,
    linear_posterior,
    pl_parallel,
    pl_sequential,
)
from .kernel import Hyperparams, gram_cross, gram_test, gram_train
from .likelihoods import (
    AffineChannel,
    LikelihoodModel,
    SlrStatistics,
    UnsupportedLikelihoodError,
    cond_moments,
    logit,
    noisy_threshold,
    probit,
    slr_statistics,
)
from .model import (
    FitConfig,
    FitFailureError,
    FittedModel,
    Prediction,
    fit,
    load_model,
    log_marginal_pl,
    predict,
    predict_labels,
    save_model,
)
from .numerics import (
    NumericFailureError,
    PositiveDefiniteError,
    QuadratureRule,
    expect_1d,
    gauss_hermite_rule,
    psd_factor_solve,
)
from .slr import InternalConsistencyError, SiteLinearization, slr_site

__version__ = "0.1.0"
