import numpy as np
import pytest

from rsvm.baselines import (
    eps_from_noise,
    nuclear_min,
    rvm_fit,
    svt,
)
from rsvm.baselines import _fista
from rsvm.linalg import unvec, vec


class TestEpsFromNoise:
    def test_zero_noise(self):
        assert eps_from_noise(0.0, 10) == 0.0

    def test_small_case(self):
        assert np.isclose(eps_from_noise(1.0, 2), np.sqrt(2.0 + 4.0))

    def test_larger_case(self):
        assert np.isclose(eps_from_noise(0.5, 100), 0.5 * np.sqrt(100 + np.sqrt(800.0)))

    def test_validation(self):
        with pytest.raises(ValueError):
            eps_from_noise(-1.0, 10)
        with pytest.raises(ValueError):
            eps_from_noise(1.0, 0)


class TestSvt:
    def test_diagonal_matches_scalar_shrinkage(self, rng):
        d = rng.standard_normal(4) * 3.0
        out = svt(np.diag(d), 1.0)
        shrunk = np.sign(d) * np.maximum(np.abs(d) - 1.0, 0.0)
        assert np.allclose(out, np.diag(shrunk), atol=1e-12)

    def test_threshold_zero_is_identity(self, rng):
        x = rng.standard_normal((3, 5))
        assert np.allclose(svt(x, 0.0), x, atol=1e-12)

    def test_large_threshold_zeroes(self, rng):
        x = rng.standard_normal((3, 5))
        assert np.allclose(svt(x, 100.0), 0.0)


class TestRvm:
    def test_zero_measurements(self):
        a = np.eye(4)
        state = rvm_fit(a, np.zeros(4), max_iters=10)
        assert np.allclose(state.x_hat, 0.0)
        assert state.gamma.min() > 1e11  # every precision grows

    def test_scalar_hand_iteration(self):
        # n = 1, A = [1]: three hand-tracked steps from the same start
        a = np.array([[1.0]])
        y = np.array([2.0])
        gamma, beta = 1.0, 1.0 / 4.0  # beta_init = m / y^2
        x = 0.0
        for _ in range(3):
            sig = 1.0 / (gamma + beta)
            x = beta * sig * y[0]
            gdot = gamma * sig
            gamma = (1.0 - gamma * sig) / x**2
            beta = gdot / (y[0] - x) ** 2
        state = rvm_fit(a, y, max_iters=3, tol=0.0)
        assert np.isclose(state.x_hat[0], x, rtol=1e-12)
        assert np.isclose(state.gamma[0], gamma, rtol=1e-12)
        assert np.isclose(state.beta, beta, rtol=1e-12)

    def test_pinned_gamma_is_ridge(self, rng):
        n, m = 6, 12
        a = rng.standard_normal((m, n))
        y = rng.standard_normal(m)
        gamma0, beta0 = 2.5, 3.0
        state = rvm_fit(
            a, y, max_iters=1, gamma_init=gamma0, beta_init=beta0,
            update_gamma=False, tol=0.0,
        )
        ridge = np.linalg.solve(gamma0 * np.eye(n) + beta0 * a.T @ a, beta0 * a.T @ y)
        assert np.abs(state.x_hat - ridge).max() <= 1e-10

    def test_sparse_recovery(self, rng):
        n, m, k = 100, 50, 5
        nmses, dominant = [], 0
        trials = 10
        for seed in range(trials):
            rg = np.random.default_rng(500 + seed)
            a = rg.standard_normal((m, n))
            a /= np.linalg.norm(a, axis=0, keepdims=True)
            support = rg.choice(n, size=k, replace=False)
            x = np.zeros(n)
            x[support] = rg.standard_normal(k)
            sigma2 = k / (m * 10.0**3)
            y = a @ x + rg.standard_normal(m) * np.sqrt(sigma2)
            state = rvm_fit(a, y)
            nmses.append(np.sum((state.x_hat - x) ** 2) / np.sum(x**2))
            top = np.argsort(np.abs(state.x_hat))[-k:]
            if set(top) == set(support):
                dominant += 1
        assert np.median(nmses) < 1e-2
        assert dominant >= 0.8 * trials


class TestNuclearMin:
    def test_huge_ball_gives_zero(self, rng):
        a = rng.standard_normal((6, 8))
        y = rng.standard_normal(6)
        res = nuclear_min(a, y, 2, 4, eps_ball=1e6)
        assert np.allclose(res.x_hat, 0.0)
        assert res.bracketed

    def test_identity_noiseless(self, rng):
        p = q = 4
        y = rng.standard_normal(p * q)
        res = nuclear_min(np.eye(p * q), y, p, q, eps_ball=1e-9)
        assert np.abs(res.x_hat - unvec(y, p, q)).max() <= 1e-6

    def test_ball_constraint_hit(self, rng):
        p = q = 8
        r, m = 2, int(0.8 * p * q)
        a = rng.standard_normal((m, p * q))
        a /= np.linalg.norm(a, axis=0, keepdims=True)
        x = rng.standard_normal((p, r)) @ rng.standard_normal((r, q))
        sigma_n = np.sqrt(r * p * q / (m * 10.0**4))
        y = a @ vec(x) + rng.standard_normal(m) * sigma_n
        eps = eps_from_noise(sigma_n, m)
        res = nuclear_min(a, y, p, q, eps)
        assert res.bracketed
        assert 0.99 * eps <= res.residual <= 1.01 * eps

    def test_matches_long_run_reference(self, rng):
        # inner solver objective within 1e-3 relative of a 1e5-iteration run
        p = q = 8
        r, m = 2, int(0.8 * p * q)
        a = rng.standard_normal((m, p * q))
        a /= np.linalg.norm(a, axis=0, keepdims=True)
        x = rng.standard_normal((p, r)) @ rng.standard_normal((r, q))
        sigma_n = np.sqrt(r * p * q / (m * 10.0**4))
        y = a @ vec(x) + rng.standard_normal(m) * sigma_n
        lam = 0.05
        lip = 2.0 * float(np.linalg.norm(a, 2)) ** 2

        def objective(xm):
            resid = y - a @ vec(xm)
            return float(resid @ resid) + lam * np.linalg.svd(xm, compute_uv=False).sum()

        x_short, _ = _fista(a, y, p, q, lam, lip, np.zeros((p, q)), 2000, 1e-6)
        x_long, _ = _fista(a, y, p, q, lam, lip, np.zeros((p, q)), 100000, 0.0)
        assert objective(x_short) <= (1.0 + 1e-3) * objective(x_long)

    def test_infeasible_ball_warns(self, rng):
        # overdetermined full-rank system with eps below the LS residual
        a = rng.standard_normal((20, 4))
        y = rng.standard_normal(20)
        with pytest.warns(UserWarning):
            res = nuclear_min(a, y, 2, 2, eps_ball=1e-12)
        assert not res.bracketed

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            nuclear_min(np.eye(4), np.zeros(4), 2, 2, eps_ball=-1.0)
