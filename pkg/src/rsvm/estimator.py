"""Relevance singular vector machine (RSVM) for low-rank matrix reconstruction.

Model: y = A vec(X) + n with n ~ N(0, beta^{-1} I), and a Gaussian prior
vec(X) ~ N(0, (alpha_R kron alpha_L)^{-1}) whose matrix precisions carry the
low-rank structure. Each iteration performs

1. posterior (LMMSE) step:  Sigma = (alpha_R kron alpha_L + beta A.T A)^{-1},
   vec(Xhat) = beta Sigma A.T y;
2. noise precision update (``trace`` rule by default, ``gamma`` selectable);
3. precision updates driven by the chosen penalty: for the Schatten-s prior
   alpha_L <- c (Xhat alpha_R Xhat.T + SigmaL + eps I)^{(s-2)/2} and its
   mirror image for alpha_R, with c from
   :func:`rsvm.penalties.schatten_update_coeff`; for the log-det prior the
   same expression with power -1 and multiplier nu. SigmaL / SigmaR are the
   partial traces of Sigma against the opposite precision;
4. optionally, precision balancing.

One-sided variants pin the opposite precision at the identity and update
only the free side. Because the posterior-uncertainty term of the update
grows like the inverse of the free precision, the unbalanced one-sided
iteration has a degenerate fixed point where the precision collapses toward
zero and the fit degrades to a pseudo-inverse; when balancing is enabled the
free precision is therefore rescaled each iteration so that the prior
expectation of ||X||_F^2 matches its posterior expectation (the first
balancing condition, with the pinned side's inverse trace fixed at its
dimension). Two-sided balancing enforces both conditions
tr(alpha_L^{-1}) tr(alpha_R^{-1}) = ||Xhat||_F^2 + tr(Sigma) and
tr(alpha_L^{-1}) = tr(alpha_R^{-1}) exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import (
    NumericalError,
    kron,
    mat_pow_sym,
    partial_trace_left,
    partial_trace_right,
    pd_inverse_logdet,
    symmetrize,
    unvec,
    vec,
)
from .penalties import (
    LogDetPenalty,
    NuclearPenalty,
    PenaltyKind,
    SchattenPenalty,
    latent_potential,
    schatten_update_coeff,
)

SIDED = ("left", "right", "two")
NOISE_RULES = ("trace", "gamma")


class FitError(NumericalError):
    """A sub-operation failed during fit; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class EstimatorConfig:
    """Configuration of one RSVM estimator.

    Parameters
    ----------
    penalty : PenaltyKind
        Schatten-s or log-det penalty; selects the precision update rule.
    sided : {"two", "left", "right"}
        Which precisions are learned; the other is pinned at identity.
    noise_rule : {"trace", "gamma"}
        "trace": beta <- (m + 2a) / (||y - A vec(Xhat)||^2 + tr(A Sigma A.T) + 2b).
        "gamma": beta <- (tr((alpha_R kron alpha_L) Sigma) + 2a) / (||r||^2 + 2b).
    a, b : float
        Gamma hyperprior parameters for beta; near-zero is non-informative.
    balancing : bool
        Rescale precisions each iteration (see module docstring).
    beta_init : float or None
        None selects the scale-aware default m / ||y||^2.
    """

    penalty: PenaltyKind = field(default_factory=SchattenPenalty)
    sided: str = "two"
    noise_rule: str = "trace"
    a: float = 1e-6
    b: float = 1e-6
    balancing: bool = True
    max_iters: int = 200
    tol: float = 1e-6
    beta_init: float | None = None
    track_objective: bool = False

    def __post_init__(self):
        if self.sided not in SIDED:
            raise ValueError(f"sided must be one of {SIDED}, got {self.sided!r}")
        if self.noise_rule not in NOISE_RULES:
            raise ValueError(
                f"noise_rule must be one of {NOISE_RULES}, got {self.noise_rule!r}"
            )
        if isinstance(self.penalty, NuclearPenalty):
            raise ValueError(
                "the iterative estimator has no nuclear-penalty update rule; "
                "use SchattenPenalty(s=1) or the nuclear_min baseline"
            )
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.a < 0 or self.b < 0:
            raise ValueError("hyperprior parameters a, b must be >= 0")
        if self.beta_init is not None and self.beta_init <= 0:
            raise ValueError("beta_init must be positive")


@dataclass(frozen=True)
class PosteriorState:
    """One iterate of the estimator: posterior moments plus hyperparameters."""

    x_hat: np.ndarray
    sigma: np.ndarray
    alpha_l: np.ndarray
    alpha_r: np.ndarray
    beta: float
    objective: float | None = None

    @property
    def p(self) -> int:
        return self.x_hat.shape[0]

    @property
    def q(self) -> int:
        return self.x_hat.shape[1]

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.x_hat, compute_uv=False)


@dataclass
class FitTrace:
    """Per-iteration history of a fit (entry 0 is the initial state)."""

    x_hats: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    rel_changes: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iters(self) -> int:
        return len(self.betas) - 1


@dataclass(frozen=True)
class FitResult:
    state: PosteriorState
    trace: FitTrace

    @property
    def x_hat(self) -> np.ndarray:
        return self.state.x_hat


def _lmmse_core(ata, aty, alpha_l, alpha_r, beta, p, q):
    """Shared posterior step; returns (x_hat, sigma, logdet_sigma)."""
    h = kron(alpha_r, alpha_l) + beta * ata
    sigma, logdet_h = pd_inverse_logdet(h)
    sigma = symmetrize(sigma)
    x_hat = unvec(beta * (sigma @ aty), p, q)
    return x_hat, sigma, -logdet_h


def lmmse_update(a, y, alpha_l, alpha_r, beta):
    """Posterior mean and covariance for fixed precisions and noise.

    Returns (x_hat, sigma) with sigma = (alpha_R kron alpha_L + beta A.T A)^{-1}
    and vec(x_hat) = beta sigma A.T y.
    """
    p, q = alpha_l.shape[0], alpha_r.shape[0]
    x_hat, sigma, _ = _lmmse_core(a.T @ a, a.T @ y, alpha_l, alpha_r, beta, p, q)
    return x_hat, sigma


_DENOMINATOR_FLOOR = 1e-30


def _noise_update_core(state, ata, resid2, m, config) -> float:
    if config.noise_rule == "trace":
        tr_asa = float(np.einsum("ij,ij", ata, state.sigma))
        den = resid2 + tr_asa + 2.0 * config.b
        num = m + 2.0 * config.a
    else:
        prior = kron(state.alpha_r, state.alpha_l)
        num = float(np.einsum("ij,ij", prior, state.sigma)) + 2.0 * config.a
        den = resid2 + 2.0 * config.b
    if den <= 0.0:
        if config.b > 0.0:
            raise NumericalError(f"noise update denominator {den} <= 0 with b > 0")
        den = _DENOMINATOR_FLOOR
    return num / den


def noise_update(state: PosteriorState, a, y, config: EstimatorConfig) -> float:
    """Noise precision update under the configured rule."""
    r = y - a @ vec(state.x_hat)
    return _noise_update_core(state, a.T @ a, float(r @ r), a.shape[0], config)


def alpha_update_schatten(
    state: PosteriorState,
    s: float,
    epsilon: float,
    update_left: bool = True,
    update_right: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Schatten-s precision updates, left first, right with the fresh left."""
    c = schatten_update_coeff(s)
    power = (s - 2.0) / 2.0
    return _alpha_updates(state, update_left, update_right, lambda w: c * mat_pow_sym(w, power), epsilon)


def alpha_update_logdet(
    state: PosteriorState,
    nu: float,
    epsilon: float,
    update_left: bool = True,
    update_right: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Log-det precision updates: alpha <- nu (Xhat-term + partial trace + eps I)^{-1}."""
    return _alpha_updates(state, update_left, update_right, lambda w: nu * mat_pow_sym(w, -1.0), epsilon)


def _alpha_updates(state, update_left, update_right, rule, epsilon):
    x_hat, sigma = state.x_hat, state.sigma
    p, q = state.p, state.q
    alpha_l, alpha_r = state.alpha_l, state.alpha_r
    if update_left:
        sig_l = partial_trace_left(sigma, alpha_r, p)
        w = symmetrize(x_hat @ alpha_r @ x_hat.T) + sig_l + epsilon * np.eye(p)
        alpha_l = rule(w)
    if update_right:
        sig_r = partial_trace_right(sigma, alpha_l, q)
        w = symmetrize(x_hat.T @ alpha_l @ x_hat) + sig_r + epsilon * np.eye(q)
        alpha_r = rule(w)
    return alpha_l, alpha_r


def balance_precisions(state: PosteriorState) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided balancing rescale.

    Scales alpha_L by tr(alpha_L^{-1})/tau and alpha_R by tr(alpha_R^{-1})/tau
    with tau = sqrt(||Xhat||_F^2 + tr(Sigma)), after which both inverse traces
    equal tau, so their product matches the posterior second moment exactly.
    """
    tau2 = float(np.einsum("ij,ij", state.x_hat, state.x_hat)) + float(
        np.trace(state.sigma)
    )
    if tau2 <= 0.0:
        warnings.warn("balancing skipped: ||Xhat||^2 + tr(Sigma) is zero")
        return state.alpha_l, state.alpha_r
    tau = np.sqrt(tau2)
    t_l = float(np.trace(np.linalg.inv(state.alpha_l)))
    t_r = float(np.trace(np.linalg.inv(state.alpha_r)))
    return state.alpha_l * (t_l / tau), state.alpha_r * (t_r / tau)


def _rescale_one_sided(state: PosteriorState, sided: str) -> tuple[np.ndarray, np.ndarray]:
    """Norm-matching rescale of the free precision in one-sided fits.

    Enforces the first balancing condition with the pinned side's inverse
    trace fixed at its dimension: tr(alpha_free^{-1}) * dim(pinned) =
    ||Xhat||_F^2 + tr(Sigma). The second condition is unattainable with a
    hard identity pin and is dropped.
    """
    tau2 = float(np.einsum("ij,ij", state.x_hat, state.x_hat)) + float(
        np.trace(state.sigma)
    )
    if tau2 <= 0.0:
        warnings.warn("balancing skipped: ||Xhat||^2 + tr(Sigma) is zero")
        return state.alpha_l, state.alpha_r
    if sided == "left":
        t_l = float(np.trace(np.linalg.inv(state.alpha_l)))
        return state.alpha_l * (t_l * state.q / tau2), state.alpha_r
    t_r = float(np.trace(np.linalg.inv(state.alpha_r)))
    return state.alpha_l, state.alpha_r * (t_r * state.p / tau2)


def log_marginal_likelihood(state: PosteriorState, a, y) -> float:
    """log N(y | 0, beta^{-1} I + A (alpha_R kron alpha_L)^{-1} A.T).

    Evaluated through the posterior-precision factorization:
    log|C| = -m log beta - log|Sigma| - q log|alpha_L| - p log|alpha_R| and
    y.T C^{-1} y = beta y.T (y - A vec(Xhat)). Invariant under the Kronecker
    gauge (c alpha_L, alpha_R / c).
    """
    m = a.shape[0]
    p, q = state.p, state.q
    ata = a.T @ a
    aty = a.T @ y
    x_hat, sigma, logdet_sigma = _lmmse_core(
        ata, aty, state.alpha_l, state.alpha_r, state.beta, p, q
    )
    _, logdet_al = np.linalg.slogdet(state.alpha_l)
    _, logdet_ar = np.linalg.slogdet(state.alpha_r)
    logdet_c = -m * np.log(state.beta) - logdet_sigma - q * logdet_al - p * logdet_ar
    quad = state.beta * float(y @ (y - a @ vec(x_hat)))
    return -0.5 * (m * np.log(2.0 * np.pi) + logdet_c + quad)


def objective(state: PosteriorState, a, y, config: EstimatorConfig) -> float:
    """Log marginal posterior of the hyperparameters (prior normalizers dropped).

    log p(y | alpha_L, alpha_R, beta) + log p(learned precisions) + log p(beta),
    with log p(alpha) = -K(alpha)/2 from the penalty's latent potential and
    log p(beta) = a log beta - b beta. Pinned identity precisions contribute
    a constant and are skipped. The likelihood term alone is gauge-invariant;
    the prior terms are not, which is exactly the freedom balancing fixes.
    """
    val = log_marginal_likelihood(state, a, y)
    pen = config.penalty
    if isinstance(pen, LogDetPenalty) and pen.nu is None:
        pen = replace(pen, nu=pen.resolve_nu(state.p, state.q))
    if config.sided in ("left", "two"):
        val -= 0.5 * latent_potential(pen, state.alpha_l, state.q)
    if config.sided in ("right", "two"):
        val -= 0.5 * latent_potential(pen, state.alpha_r, state.p)
    val += config.a * np.log(state.beta) - config.b * state.beta
    return float(val)


def fit(a, y, p: int, q: int, config: EstimatorConfig | None = None) -> FitResult:
    """Run the RSVM iteration until the estimate stops moving.

    Parameters
    ----------
    a : (m, p*q) ndarray
        Measurement operator acting on vec(X).
    y : (m,) ndarray
        Measurements.
    p, q : int
        Shape of the matrix to reconstruct.
    config : EstimatorConfig, optional

    Returns
    -------
    FitResult
        Final posterior state (consistent: sigma is the posterior covariance
        under the returned precisions and beta) plus the iteration trace.
        Convergence criterion: relative Frobenius change of Xhat below
        config.tol.
    """
    if config is None:
        config = EstimatorConfig()
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    m = a.shape[0]
    if a.shape[1] != p * q:
        raise ValueError(f"A has {a.shape[1]} columns, expected p*q = {p * q}")
    if y.shape[0] != m:
        raise ValueError(f"y has length {y.shape[0]}, expected {m}")

    pen = config.penalty
    if isinstance(pen, LogDetPenalty):
        nu = pen.resolve_nu(p, q)
    ata = symmetrize(a.T @ a)
    aty = a.T @ y
    alpha_l = np.eye(p)
    alpha_r = np.eye(q)
    norm_y2 = float(y @ y)
    beta = config.beta_init if config.beta_init is not None else (
        m / norm_y2 if norm_y2 > 0.0 else 1.0
    )

    def make_state(x_hat, sigma, al, ar, b_, obj=None):
        return PosteriorState(
            x_hat=x_hat, sigma=sigma, alpha_l=al, alpha_r=ar, beta=b_, objective=obj
        )

    trace = FitTrace()

    def record(state):
        obj = objective(state, a, y, config) if config.track_objective else None
        trace.x_hats.append(state.x_hat.copy())
        trace.betas.append(state.beta)
        trace.objectives.append(obj)
        return obj

    x_hat, sigma, _ = _lmmse_core(ata, aty, alpha_l, alpha_r, beta, p, q)
    state = make_state(x_hat, sigma, alpha_l, alpha_r, beta)
    state = replace(state, objective=record(state))
    trace.rel_changes.append(np.inf)

    update_left = config.sided in ("left", "two")
    update_right = config.sided in ("right", "two")

    for it in range(1, config.max_iters + 1):
        try:
            r = y - a @ vec(state.x_hat)
            beta = _noise_update_core(state, ata, float(r @ r), m, config)
            working = replace(state, beta=beta)
            if isinstance(pen, SchattenPenalty):
                alpha_l, alpha_r = alpha_update_schatten(
                    working, pen.s, pen.epsilon, update_left, update_right
                )
            else:
                alpha_l, alpha_r = alpha_update_logdet(
                    working, nu, pen.epsilon, update_left, update_right
                )
            working = replace(working, alpha_l=alpha_l, alpha_r=alpha_r)
            if config.balancing:
                if config.sided == "two":
                    alpha_l, alpha_r = balance_precisions(working)
                else:
                    alpha_l, alpha_r = _rescale_one_sided(working, config.sided)
            x_new, sigma, _ = _lmmse_core(ata, aty, alpha_l, alpha_r, beta, p, q)
        except NumericalError as e:
            raise FitError(it, str(e)) from e
        new_state = make_state(x_new, sigma, alpha_l, alpha_r, beta)
        new_state = replace(new_state, objective=record(new_state))
        rel = float(
            np.linalg.norm(x_new - state.x_hat)
            / max(1.0, np.linalg.norm(state.x_hat))
        )
        trace.rel_changes.append(rel)
        state = new_state
        if rel <= config.tol:
            trace.converged = True
            break

    return FitResult(state=state, trace=trace)
