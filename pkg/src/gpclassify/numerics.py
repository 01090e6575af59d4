"""Gaussian quadrature and positive-definite linear algebra helpers.

Everything here is a pure function of its inputs, so it is safe to call
from several threads at once.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_triangular
from scipy.linalg.lapack import dpotrf

try:  # optional: absent installs simply keep the ambient BLAS threading
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

MAX_QUADRATURE_ORDER = 64

# A Cholesky pivot below this fraction of the largest diagonal entry is
# treated as a genuine loss of positive definiteness, not roundoff.
PD_PIVOT_RTOL = 1e-12


def blas_single_thread():
    """Context manager pinning BLAS pools to one thread when possible.

    The factorizations here are a few hundred square at most; per-call
    thread-pool synchronization costs more than the arithmetic, so the
    heavy entry points run BLAS single-threaded and parallelize across
    independent fits instead.
    """
    if threadpool_limits is None:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1, user_api="blas")


class NumericFailureError(ArithmeticError):
    """A numeric computation produced non-finite or impossible values."""


class PositiveDefiniteError(np.linalg.LinAlgError):
    """A matrix that must be positive definite is not.

    ``minor_index`` is the 1-based order of the first leading minor whose
    pivot failed, as reported by the factorization.
    """

    def __init__(self, message: str, minor_index: int):
        super().__init__(message)
        self.minor_index = minor_index


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for expectations against the standard normal.

    Weights are normalized so that ``sum(weights) == 1``; nodes are
    symmetric about zero.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Gauss-Hermite rule of the given order, in probabilists' convention.

    Exact for polynomial integrands of degree <= 2*order - 1 under the
    N(0, 1) weight.  Nodes and weights come from the Golub-Welsch
    eigendecomposition of the Jacobi matrix of the (probabilists')
    Hermite polynomials, which is stable for every supported order; no
    tabulated constants are involved.
    """
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise ValueError(f"order must be an integer, got {order!r}")
    if not 1 <= order <= MAX_QUADRATURE_ORDER:
        raise ValueError(
            f"order must be in [1, {MAX_QUADRATURE_ORDER}], got {order}"
        )
    if order == 1:
        return QuadratureRule(1, np.zeros(1), np.ones(1))
    # He_{k+1}(x) = x He_k(x) - k He_{k-1}(x): zero diagonal, off-diagonal sqrt(k).
    off = np.sqrt(np.arange(1, order, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(order), off)
    weights = vecs[0, :] ** 2  # total mass of N(0,1) is 1
    # Enforce the exact +/- symmetry the analytic rule has.
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    if order % 2 == 1:
        nodes[order // 2] = 0.0
    return QuadratureRule(order, nodes, weights / weights.sum())


def expect_1d(g, mean: float, variance: float, rule: QuadratureRule) -> float:
    """Quadrature estimate of E[g(X)] for X ~ N(mean, variance).

    ``g`` must accept an ndarray of evaluation points.
    """
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    points = mean + np.sqrt(variance) * rule.nodes
    values = np.asarray(g(points), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericFailureError(
            "integrand returned non-finite values at quadrature nodes"
        )
    return float(rule.weights @ values)


class CholeskyFactor:
    """Lower-triangular Cholesky factor of a positive definite matrix."""

    def __init__(self, lower: np.ndarray):
        self.lower = lower

    @property
    def logdet(self) -> float:
        """Log-determinant of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve M x = b using the stored factor."""
        z = solve_triangular(self.lower, b, lower=True)
        return solve_triangular(self.lower.T, z, lower=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve L z = b (useful for forming quadratic forms cheaply)."""
        return solve_triangular(self.lower, b, lower=True)


def psd_cholesky(m: np.ndarray) -> CholeskyFactor:
    """Cholesky-factor a symmetric positive definite matrix.

    Raises :class:`PositiveDefiniteError` (with the offending leading
    minor index) if a pivot is non-positive or falls below
    ``PD_PIVOT_RTOL`` times the largest diagonal entry.
    """
    m = np.asarray(m, dtype=float)
    lower, info = dpotrf(m, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise PositiveDefiniteError(
            f"matrix is not positive definite: leading minor {info} failed",
            minor_index=int(info),
        )
    if info < 0:
        raise ValueError(f"invalid matrix passed to factorization (info={info})")
    pivots = np.diag(lower) ** 2
    tol = PD_PIVOT_RTOL * float(np.max(np.diag(m)))
    small = np.nonzero(pivots < tol)[0]
    if small.size:
        raise PositiveDefiniteError(
            f"matrix is numerically singular: pivot {pivots[small[0]]:g} at "
            f"leading minor {small[0] + 1} below tolerance {tol:g}",
            minor_index=int(small[0] + 1),
        )
    return CholeskyFactor(lower)


def psd_factor_solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M x = B for symmetric positive definite M via Cholesky."""
    return psd_cholesky(m).solve(np.asarray(b, dtype=float))


def log_gaussian_density(x: np.ndarray, mean: np.ndarray, cov_factor: CholeskyFactor) -> float:
    """Log N(x; mean, M) given a Cholesky factor of M."""
    x = np.asarray(x, dtype=float)
    r = x - np.asarray(mean, dtype=float)
    half = cov_factor.half_solve(r)
    n = r.shape[0]
    return -0.5 * (n * np.log(2.0 * np.pi) + cov_factor.logdet + float(half @ half))
