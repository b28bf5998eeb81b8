"""Reference estimators: vector relevance vector machine and nuclear-norm fit.

The RVM treats the unknown as a plain sparse vector with independent
precisions gamma_i; it is the scalar ancestor of the matrix estimators in
:mod:`rsvm.estimator`. The nuclear-norm estimator solves

    min ||X||_*  s.t.  ||y - A vec(X)||_2 <= eps_ball

through its Lagrangian ||y - A vec(X)||^2 + lam ||X||_* with accelerated
proximal gradient (singular-value soft-thresholding prox) and a bisection
on lam until the residual lands on the constraint boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import pd_solve, symmetrize, unvec, vec

#: precisions above this threshold are reported as exactly pruned
RVM_PRUNE_THRESHOLD = 1e12


@dataclass(frozen=True)
class RvmState:
    """Converged RVM iterate: precisions, noise precision, posterior moments."""

    gamma: np.ndarray
    beta: float
    x_hat: np.ndarray
    sigma: np.ndarray
    n_iters: int
    converged: bool

    def support(self) -> np.ndarray:
        """Indices that survived pruning (gamma below the prune threshold)."""
        return np.flatnonzero(self.gamma < RVM_PRUNE_THRESHOLD)


def rvm_fit(
    a,
    y,
    hyper_a: float = 0.0,
    hyper_b: float = 0.0,
    max_iters: int = 1000,
    tol: float = 1e-6,
    gamma_init: np.ndarray | float = 1.0,
    beta_init: float | None = None,
    update_gamma: bool = True,
) -> RvmState:
    """Relevance vector machine for y = A x + n with elementwise precisions.

    Iterates the posterior step x_hat = beta Sigma A.T y with
    Sigma = (diag(gamma) + beta A.T A)^{-1}, then

        gamma_i <- (1 - gamma_i Sigma_ii + 2a) / (x_hat_i^2 + 2b)
        beta    <- (sum_i gamma_i Sigma_ii + 2a) / (||y - A x_hat||^2 + 2b)

    until the relative change of x_hat drops below ``tol``. In the returned
    state, entries whose precision exceeded the prune threshold are zeroed.
    ``update_gamma=False`` freezes the precisions (ridge regression).
    """
    a_mat = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    m, n = a_mat.shape
    ata = symmetrize(a_mat.T @ a_mat)
    aty = a_mat.T @ y
    gamma = np.full(n, float(gamma_init)) if np.isscalar(gamma_init) else np.asarray(
        gamma_init, dtype=float
    ).copy()
    norm_y2 = float(y @ y)
    beta = beta_init if beta_init is not None else (m / norm_y2 if norm_y2 > 0 else 1.0)

    x_hat = np.zeros(n)
    sigma = np.zeros((n, n))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        sigma = pd_solve(np.diag(gamma) + beta * ata, np.eye(n))
        sigma = symmetrize(sigma)
        x_new = beta * (sigma @ aty)
        diag = np.diag(sigma)
        # both rules read the pre-update gamma, consistent with this sigma
        gamma_dot = float(gamma @ diag)
        if update_gamma:
            # numerator <= 0 only by round-off once a component is fully
            # pruned (gamma * Sigma_ii ~ 1); treat it as dead
            num = 1.0 - gamma * diag + 2.0 * hyper_a
            den_g = np.maximum(x_new**2 + 2.0 * hyper_b, 1e-300)
            gamma = np.where(num <= 0.0, 1e30, num / den_g)
            gamma = np.clip(gamma, 1e-12, 1e30)
        resid = y - a_mat @ x_new
        den = float(resid @ resid) + 2.0 * hyper_b
        beta = (gamma_dot + 2.0 * hyper_a) / max(den, 1e-30)
        rel = np.linalg.norm(x_new - x_hat) / max(1.0, np.linalg.norm(x_hat))
        x_hat = x_new
        if rel <= tol:
            converged = True
            break

    x_report = x_hat.copy()
    x_report[gamma >= RVM_PRUNE_THRESHOLD] = 0.0
    return RvmState(
        gamma=gamma, beta=beta, x_hat=x_report, sigma=sigma, n_iters=it,
        converged=converged,
    )


def eps_from_noise(sigma_n: float, m: int) -> float:
    """Residual-ball radius sigma_n * sqrt(m + sqrt(8 m)) for the nuclear fit."""
    if sigma_n < 0:
        raise ValueError("sigma_n must be >= 0")
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(sigma_n) * np.sqrt(m + np.sqrt(8.0 * m))


def svt(x: np.ndarray, threshold: float) -> np.ndarray:
    """Singular-value soft thresholding, the prox of threshold * ||.||_*."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    s = np.maximum(s - threshold, 0.0)
    return (u * s) @ vt


@dataclass(frozen=True)
class NuclearMinResult:
    x_hat: np.ndarray
    lam: float
    residual: float
    n_iters: int
    bracketed: bool


def _fista(a, y, p, q, lam, lipschitz, x0, max_iters, rel_tol):
    """Minimize ||y - A vec(X)||^2 + lam ||X||_* from warm start x0."""
    x = x0.copy()
    z = x.copy()
    t = 1.0
    obj_prev = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = 2.0 * unvec(a.T @ (a @ vec(z) - y), p, q)
        x_new = svt(z - grad / lipschitz, lam / lipschitz)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 10 == 0 or it == max_iters:
            r = y - a @ vec(x)
            obj = float(r @ r) + lam * np.linalg.svd(x, compute_uv=False).sum()
            if abs(obj_prev - obj) <= rel_tol * max(1.0, abs(obj)):
                break
            obj_prev = obj
    return x, it


def nuclear_min(
    a,
    y,
    p: int,
    q: int,
    eps_ball: float,
    max_fista_iters: int = 2000,
    rel_tol: float = 1e-6,
    max_bisect: int = 60,
) -> NuclearMinResult:
    """Nuclear-norm minimization subject to a residual ball constraint.

    Bisects the Lagrangian weight on a log scale until
    ||y - A vec(X)||_2 falls in [0.99, 1.01] * eps_ball (the residual is
    nondecreasing in the weight), warm-starting each inner FISTA solve. If
    the band cannot be reached the best feasible iterate seen is returned
    with ``bracketed=False`` and a warning.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if eps_ball < 0:
        raise ValueError("eps_ball must be >= 0")
    norm_y = float(np.linalg.norm(y))
    if norm_y <= eps_ball:
        # X = 0 is feasible and has minimal norm
        return NuclearMinResult(
            x_hat=np.zeros((p, q)), lam=np.inf, residual=norm_y, n_iters=0,
            bracketed=True,
        )
    lipschitz = 2.0 * float(np.linalg.norm(a, 2)) ** 2
    # above lam_hi the zero matrix is optimal, so the residual is ||y||
    lam_hi = 2.0 * float(np.linalg.svd(unvec(a.T @ y, p, q), compute_uv=False)[0])
    lam_lo = lam_hi * 1e-12
    lo_band, hi_band = 0.99 * eps_ball, 1.01 * eps_ball

    x = np.zeros((p, q))
    total_iters = 0
    best_feasible = None  # (nuclear norm, x, lam, residual)

    def residual_of(x_):
        return float(np.linalg.norm(y - a @ vec(x_)))

    lam = lam_hi
    for _ in range(max_bisect):
        lam = np.sqrt(lam_lo * lam_hi)
        x, used = _fista(a, y, p, q, lam, lipschitz, x, max_fista_iters, rel_tol)
        total_iters += used
        res = residual_of(x)
        if res <= eps_ball:
            nn = float(np.linalg.svd(x, compute_uv=False).sum())
            if best_feasible is None or nn < best_feasible[0]:
                best_feasible = (nn, x.copy(), lam, res)
        if lo_band <= res <= hi_band:
            return NuclearMinResult(
                x_hat=x, lam=lam, residual=res, n_iters=total_iters, bracketed=True
            )
        if res > hi_band:
            lam_hi = lam
        else:
            lam_lo = lam
    if best_feasible is not None:
        _, xb, lamb, resb = best_feasible
        warnings.warn(
            f"nuclear_min bisection did not land in the residual band "
            f"[{lo_band:.3g}, {hi_band:.3g}]; returning best feasible iterate"
        )
        return NuclearMinResult(
            x_hat=xb, lam=lamb, residual=resb, n_iters=total_iters, bracketed=False
        )
    warnings.warn(
        "nuclear_min could not reach the residual ball (infeasible eps_ball?); "
        "returning the tightest-fit iterate"
    )
    return NuclearMinResult(
        x_hat=x, lam=lam, residual=residual_of(x), n_iters=total_iters,
        bracketed=False,
    )
