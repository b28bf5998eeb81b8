"""Low-rank penalty functions and their latent precision-matrix potentials.

A penalty g(X) that depends on X only through Z = X X.T corresponds to a
latent Gaussian scale-mixture: X | alpha ~ N(0, alpha^{-1}) columnwise, with
a prior p(alpha) proportional to exp(-K(alpha)/2). Writing
Ktilde(alpha) = q log|alpha| - K(alpha), the two sides are linked by the
concave-conjugate pair

    gtilde(Z)     = min_{alpha > 0} tr(alpha Z) - Ktilde(alpha),
    Ktilde(alpha) = min_{Z > 0}     tr(alpha Z) - gtilde(Z),

where q is the number of columns of X. :func:`conjugacy_check` evaluates
both sides numerically on diagonal arguments, where the minimization
separates into scalar problems.

Supported penalties:

* Schatten-s: g(X) = tr((X X.T + eps I)^{s/2}), 0 < s <= 1. Its potential is
  K(alpha) = C_s tr(alpha^{-s/(2-s)}) + q log|alpha| + eps tr(alpha) with
  C_s = ((2-s)/2) (2/s)^{-s/(2-s)}; see :func:`schatten_potential_coeff`.
* Log-det: g(X) = nu log|X X.T + eps I|, with Wishart-type potential
  K(alpha) = eps tr(alpha) + (q - nu) log|alpha|, requiring nu > q - 2.
* Nuclear: g(X) = sum of singular values. Reporting only; its latent
  potential is the s = 1 Schatten case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .linalg import NumericalError, sym_eig

#: bracket for the per-coordinate conjugate minimizer searches
ALPHA_BRACKET = (1e-8, 1e8)

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class SchattenPenalty:
    """Regularized Schatten-s norm penalty, nuclear norm at s = 1."""

    s: float = 0.5
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"Schatten exponent must be in (0, 1], got {self.s}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class LogDetPenalty:
    """Log-determinant penalty nu * log|X X.T + eps I|.

    ``nu=None`` resolves to max(p, q) when the penalty is bound to a problem
    shape; the Wishart constraint nu > max(p, q) - 2 is checked at bind time.
    """

    nu: float | None = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def resolve_nu(self, p: int, q: int) -> float:
        nu = float(max(p, q)) if self.nu is None else float(self.nu)
        if nu <= max(p, q) - 2:
            raise ValueError(
                f"log-det penalty needs nu > max(p, q) - 2 = {max(p, q) - 2}, got {nu}"
            )
        return nu


@dataclass(frozen=True)
class NuclearPenalty:
    """Unregularized nuclear norm (sum of singular values)."""


PenaltyKind = SchattenPenalty | LogDetPenalty | NuclearPenalty


def schatten_potential_coeff(s: float) -> float:
    """Coefficient C_s of tr(alpha^{-s/(2-s)}) in the Schatten potential.

    C_s = ((2-s)/2) * (2/s)^{-s/(2-s)}. With this constant the conjugate
    construction reproduces gtilde(Z) = tr((Z + eps I)^{s/2}) exactly
    (value 1/4 at s = 1, matching the classical variational form of the
    nuclear norm).
    """
    return ((2.0 - s) / 2.0) * (2.0 / s) ** (-s / (2.0 - s))


def schatten_update_coeff(s: float) -> float:
    """Multiplier of the precision update consistent with the Schatten potential.

    Stationarity of tr(alpha W) + C_s tr(alpha^{-s/(2-s)}) over PD alpha
    gives alpha = (s/2) W^{(s-2)/2}.
    """
    return s / 2.0


def penalty_value(kind: PenaltyKind, x: np.ndarray) -> float:
    """Evaluate g(X) for a p-by-q matrix X."""
    x = np.asarray(x, dtype=float)
    if isinstance(kind, NuclearPenalty):
        return float(np.linalg.svd(x, compute_uv=False).sum())
    p = x.shape[0]
    lam, _ = sym_eig(x @ x.T)
    lam = np.maximum(lam, 0.0)  # clip eigh round-off on the rank-deficient tail
    if isinstance(kind, SchattenPenalty):
        return float(((lam + kind.epsilon) ** (kind.s / 2.0)).sum())
    if isinstance(kind, LogDetPenalty):
        nu = float(max(p, x.shape[1])) if kind.nu is None else float(kind.nu)
        return float(nu * np.log(lam + kind.epsilon).sum())
    raise TypeError(f"unknown penalty kind {kind!r}")


def latent_potential(kind: PenaltyKind, alpha: np.ndarray, q_dim: int) -> float:
    """Evaluate the latent potential K(alpha) for a PD precision matrix.

    ``q_dim`` is the column count of the matrix the prior acts on (the
    Gaussian normalization contributes q_dim * log|alpha|).
    """
    lam, _ = sym_eig(np.asarray(alpha, dtype=float))
    if lam.min() <= 0.0:
        raise ValueError("latent potential requires a positive-definite precision")
    logdet = float(np.log(lam).sum())
    trace = float(lam.sum())
    if isinstance(kind, SchattenPenalty):
        t = kind.s / (2.0 - kind.s)
        return (
            schatten_potential_coeff(kind.s) * float((lam**-t).sum())
            + q_dim * logdet
            + kind.epsilon * trace
        )
    if isinstance(kind, LogDetPenalty):
        nu = float(q_dim) if kind.nu is None else float(kind.nu)
        return kind.epsilon * trace + (q_dim - nu) * logdet
    raise ValueError(
        "nuclear penalty has no latent potential; use SchattenPenalty(s=1)"
    )


def _diag_conjugate_objective(kind: PenaltyKind, z: float):
    """Per-coordinate objective f(a) = a z - Ktilde(a) and its derivative.

    For diagonal arguments Ktilde separates per coordinate and the
    q_dim log|alpha| contribution cancels between the Gaussian
    normalization and K, so f is q_dim-free.
    """
    if isinstance(kind, SchattenPenalty):
        c = schatten_potential_coeff(kind.s)
        t = kind.s / (2.0 - kind.s)
        eps = kind.epsilon

        def f(a):
            return a * (z + eps) + c * a**-t

        def fprime(a):
            return (z + eps) - c * t * a ** (-t - 1.0)

        return f, fprime
    if isinstance(kind, LogDetPenalty):
        if kind.nu is None:
            raise ValueError("conjugacy check needs an explicit nu")
        nu, eps = float(kind.nu), kind.epsilon

        def f(a):
            return a * (z + eps) - nu * np.log(a)

        def fprime(a):
            return (z + eps) - nu / a

        return f, fprime
    raise ValueError(f"no latent potential for {kind!r}")


def conjugate_minimizers(kind: PenaltyKind, z_diag: np.ndarray) -> np.ndarray:
    """Per-coordinate minimizers alpha_i of tr(alpha Z) - Ktilde(alpha).

    Found by bracketed root search of the scalar derivative; raises
    NumericalError when no sign change exists inside ALPHA_BRACKET, which
    signals an inconsistent potential.
    """
    lo, hi = ALPHA_BRACKET
    out = np.empty_like(np.asarray(z_diag, dtype=float))
    for i, z in enumerate(np.asarray(z_diag, dtype=float)):
        _, fprime = _diag_conjugate_objective(kind, float(z))
        flo, fhi = fprime(lo), fprime(hi)
        if flo * fhi >= 0.0:
            raise NumericalError(
                f"conjugate minimizer not bracketed in [{lo:g}, {hi:g}] for "
                f"z={z:g} ({kind!r}); the latent potential is inconsistent"
            )
        out[i] = brentq(fprime, lo, hi, xtol=1e-300, rtol=8.9e-16)
    return out


def conjugacy_check(
    kind: PenaltyKind, z_diag: np.ndarray, q_dim: int
) -> tuple[float, float]:
    """Evaluate both sides of the penalty/potential conjugacy on diagonal Z.

    Returns (lhs, rhs): lhs is gtilde(Z) computed directly from the penalty
    definition; rhs is min over diagonal PD alpha of tr(alpha Z) - Ktilde
    with Ktilde(alpha) = q_dim log|alpha| - K(alpha), minimized per
    coordinate by bracketed search. For the Schatten penalty the two agree
    in value; the log-det pair agrees up to an additive constant, so tests
    compare d/dz instead.
    """
    z_diag = np.asarray(z_diag, dtype=float)
    if (z_diag <= 0).any():
        raise ValueError("conjugacy check needs a PD diagonal Z")
    if isinstance(kind, SchattenPenalty):
        lhs = float(((z_diag + kind.epsilon) ** (kind.s / 2.0)).sum())
    elif isinstance(kind, LogDetPenalty):
        if kind.nu is None:
            raise ValueError("conjugacy check needs an explicit nu")
        lhs = float(kind.nu * np.log(z_diag + kind.epsilon).sum())
    else:
        raise ValueError(f"no latent potential for {kind!r}")
    minimizers = conjugate_minimizers(kind, z_diag)
    rhs = 0.0
    for z, a in zip(z_diag, minimizers):
        f, _ = _diag_conjugate_objective(kind, float(z))
        rhs += f(float(a))
    return lhs, float(rhs)
