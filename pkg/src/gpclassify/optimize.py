"""Quasi-Newton minimization with finite-difference gradients.

Small BFGS tailored to 2-d log-hyperparameter searches over noisy-ish
objectives: central-difference gradients, Armijo backtracking, inverse
Hessian reset when curvature information degenerates, and best-point
tracking across every evaluation (including the finite-difference
probes), so a failed line search still returns the best value seen.
Objective values of +inf mark infeasible points and are handled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    n_evals: int
    converged: bool
    history: list = field(default_factory=list)


def minimize_bfgs(
    fun,
    x0,
    max_iters: int = 50,
    gtol: float = 1e-5,
    fd_step: float = 1e-5,
    ftol: float = 1e-9,
) -> MinimizeResult:
    """Minimize ``fun`` from ``x0``; returns the best point encountered."""
    x0 = np.asarray(x0, dtype=float)
    dim = x0.shape[0]
    best = {"x": x0.copy(), "f": np.inf}
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        v = float(fun(np.asarray(x, dtype=float)))
        if np.isnan(v):
            v = np.inf
        if v < best["f"]:
            best["x"], best["f"] = np.array(x, dtype=float), v
        return v

    def grad(x, fx):
        g = np.zeros(dim)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = fd_step
            fp, fm = f(x + e), f(x - e)
            if np.isinf(fp) or np.isinf(fm):
                # one-sided fallback at the feasibility boundary
                if np.isfinite(fp):
                    g[j] = (fp - fx) / fd_step
                elif np.isfinite(fm):
                    g[j] = (fx - fm) / fd_step
                else:
                    g[j] = 0.0
            else:
                g[j] = (fp - fm) / (2.0 * fd_step)
        return g

    fx = f(x0)
    if np.isinf(fx):
        return MinimizeResult(best["x"], best["f"], 0, n_evals, False)
    x = x0.copy()
    g = grad(x, fx)
    h_inv = np.eye(dim)
    history = [(x.copy(), fx)]
    converged = False
    iters = 0
    for it in range(1, max_iters + 1):
        iters = it
        if np.linalg.norm(g, ord=np.inf) < gtol:
            converged = True
            break
        direction = -h_inv @ g
        if direction @ g >= 0:  # not a descent direction: reset
            h_inv = np.eye(dim)
            direction = -g
        # Armijo backtracking
        t = 1.0
        slope = float(g @ direction)
        accepted = False
        for _ in range(30):
            x_new = x + t * direction
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new <= fx + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        g_new = grad(x_new, f_new)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            i_mat = np.eye(dim)
            left = i_mat - rho * np.outer(s, yv)
            h_inv = left @ h_inv @ left.T + rho * np.outer(s, s)
        else:
            h_inv = np.eye(dim)
        stalled = abs(fx - f_new) < ftol * max(1.0, abs(fx))
        x, fx, g = x_new, f_new, g_new
        history.append((x.copy(), fx))
        if stalled:
            converged = True
            break
    return MinimizeResult(best["x"], best["f"], iters, n_evals, converged, history)
