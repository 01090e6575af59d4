"""Squared-exponential covariance with additive diagonal jitter.

The kernel is k(x_i, x_j) = s1 * exp(-||x_i - x_j||^2 / (2 l^2)) plus a
jitter variance s2 whenever i == j (training/training or test/test);
cross-covariance blocks never carry jitter because training and test
indices never coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Hyperparams:
    """Kernel hyperparameters, with the tuned ones kept in log-space.

    ``sigma2_sq`` (the jitter variance) is fixed, not optimized.
    """

    log_sigma1_sq: float
    log_ell: float
    sigma2_sq: float = 0.1

    def __post_init__(self):
        if not self.sigma2_sq > 0:
            raise ValueError(f"sigma2_sq must be positive, got {self.sigma2_sq}")
        try:
            # the squared length-scale must neither overflow nor underflow
            ok = math.isfinite(math.exp(self.log_sigma1_sq)) and math.isfinite(
                math.exp(self.log_ell)
            ) and math.exp(2.0 * self.log_ell) > 0.0
        except OverflowError:
            ok = False
        if not ok:
            raise ValueError(
                "degenerate kernel hyperparameters: "
                f"log_sigma1_sq={self.log_sigma1_sq}, log_ell={self.log_ell}"
            )

    @property
    def sigma1_sq(self) -> float:
        return math.exp(self.log_sigma1_sq)

    @property
    def ell(self) -> float:
        return math.exp(self.log_ell)


def _check_finite(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Direct differences avoid the catastrophic cancellation of the
    # a^2 - 2ab + b^2 expansion; clamp tiny negative roundoff anyway.
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.maximum(d2, 0.0)


def gram_train(x: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """n x n training Gram matrix, jitter on the diagonal."""
    x = _check_finite(x, "x")
    k = hp.sigma1_sq * np.exp(-_sq_dists(x, x) / (2.0 * hp.ell**2))
    k[np.diag_indices_from(k)] += hp.sigma2_sq
    return k


def gram_cross(x: np.ndarray, xstar: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """n x m train/test cross-covariance; no jitter anywhere."""
    x = _check_finite(x, "x")
    xstar = _check_finite(xstar, "xstar")
    if x.shape[1] != xstar.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {x.shape[1]} vs {xstar.shape[1]}"
        )
    return hp.sigma1_sq * np.exp(-_sq_dists(x, xstar) / (2.0 * hp.ell**2))


def gram_test(
    xstar: np.ndarray, hp: Hyperparams, include_jitter: bool = True
) -> np.ndarray:
    """m x m test Gram matrix.

    ``include_jitter`` keeps the jitter variance on the diagonal so test
    variances match training variances; set it to False to drop it.
    """
    xstar = _check_finite(xstar, "xstar")
    k = hp.sigma1_sq * np.exp(-_sq_dists(xstar, xstar) / (2.0 * hp.ell**2))
    if include_jitter:
        k[np.diag_indices_from(k)] += hp.sigma2_sq
    return k
