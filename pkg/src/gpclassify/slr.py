"""Statistical linear regression of conditional-moment channels.

Given the Gaussian-expectation statistics (z, s, c) of a channel and
the moments (fbar, p) of the input density, the minimum-mean-square
affine fit of the conditional mean is

    slope  = c / p
    offset = z - slope * fbar

and the residual mean square error, which becomes the site noise
variance, is

    omega = s - slope^2 * p.

``omega`` is the sum of the (nonnegative) squared linearisation error
and the expected conditional variance, so it is positive whenever the
channel has any conditional noise; only roundoff can push it to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .likelihoods import SlrStatistics

# |omega| below this is treated as roundoff and clamped up; anything
# more negative indicates broken statistics, not noise.
OMEGA_CLAMP = 1e-10

MIN_INPUT_VARIANCE = 1e-12


class InternalConsistencyError(RuntimeError):
    """SLR produced a non-positive residual variance; statistics are broken."""


@dataclass(frozen=True)
class SiteLinearization:
    """Per-datum affine site parameters (slopes, offsets, noise variances)."""

    a: np.ndarray
    b: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name, v in (("a", self.a), ("b", self.b), ("omega", self.omega)):
            if not np.all(np.isfinite(v)):
                raise ValueError(f"site parameter {name} has non-finite entries")
        if np.any(self.omega <= 0):
            raise ValueError("site noise variances must be positive")

    @property
    def n(self) -> int:
        return self.a.shape[0]


def slr_site(stats: SlrStatistics, fbar: float, p: float):
    """Affine site (slope, offset, noise variance) from channel statistics."""
    a, b, omega = slr_sites(
        np.array([stats.z]), np.array([stats.s]), np.array([stats.c]),
        np.array([float(fbar)]), np.array([float(p)]),
    )
    return float(a[0]), float(b[0]), float(omega[0])


def slr_site_scalar(z: float, s: float, c: float, fbar: float, p: float):
    """Scalar :func:`slr_sites` for per-site sweeps; identical semantics."""
    if p < MIN_INPUT_VARIANCE:
        raise ValueError(
            f"input variance below {MIN_INPUT_VARIANCE:g}: cannot linearise "
            "against a degenerate density"
        )
    a = c / p
    b = z - a * fbar
    omega = s - a * a * p
    if -OMEGA_CLAMP < omega <= OMEGA_CLAMP:
        omega = OMEGA_CLAMP
    elif omega <= 0:
        raise InternalConsistencyError(
            f"residual variance {omega:g} is negative beyond roundoff; "
            "channel statistics are inconsistent"
        )
    return a, b, omega


def slr_sites(z, s, c, fbar, p):
    """Vectorized :func:`slr_site` over per-site statistic arrays."""
    p = np.asarray(p, dtype=float)
    if np.any(p < MIN_INPUT_VARIANCE):
        raise ValueError(
            f"input variance below {MIN_INPUT_VARIANCE:g}: cannot linearise "
            "against a degenerate density"
        )
    a = np.asarray(c, dtype=float) / p
    b = np.asarray(z, dtype=float) - a * np.asarray(fbar, dtype=float)
    omega = np.asarray(s, dtype=float) - a**2 * p
    tiny = (omega > -OMEGA_CLAMP) & (omega <= OMEGA_CLAMP)
    if np.any(tiny):
        omega = np.where(tiny, OMEGA_CLAMP, omega)
    if np.any(omega <= 0):
        i = int(np.argmin(omega))
        raise InternalConsistencyError(
            f"residual variance {omega[i]:g} at site {i} is negative beyond "
            "roundoff; channel statistics are inconsistent"
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("SLR produced non-finite site parameters")
    return a, b, omega
