import numpy as np
import pytest

from rsvm.linalg import NumericalError
from rsvm.penalties import (
    LogDetPenalty,
    NuclearPenalty,
    SchattenPenalty,
    conjugacy_check,
    conjugate_minimizers,
    latent_potential,
    penalty_value,
    schatten_potential_coeff,
    schatten_update_coeff,
)

from conftest import random_orthogonal


class TestPenaltyValue:
    def test_zero_matrix_schatten(self):
        p, q, s, eps = 3, 4, 0.5, 1e-2
        val = penalty_value(SchattenPenalty(s=s, epsilon=eps), np.zeros((p, q)))
        assert np.isclose(val, p * eps ** (s / 2.0))

    def test_zero_matrix_logdet(self):
        p, q, nu, eps = 3, 4, 6.0, 1e-2
        val = penalty_value(LogDetPenalty(nu=nu, epsilon=eps), np.zeros((p, q)))
        assert np.isclose(val, nu * p * np.log(eps))

    def test_s1_approaches_nuclear(self, rng):
        x = rng.standard_normal((3, 4))
        nuc = penalty_value(NuclearPenalty(), x)
        reg = penalty_value(SchattenPenalty(s=1.0, epsilon=1e-12), x)
        assert abs(reg - nuc) <= 1e-4

    def test_nuclear_is_singular_value_sum(self, rng):
        x = rng.standard_normal((4, 6))
        assert np.isclose(
            penalty_value(NuclearPenalty(), x),
            np.linalg.svd(x, compute_uv=False).sum(),
        )

    @pytest.mark.parametrize(
        "kind",
        [SchattenPenalty(s=0.5), LogDetPenalty(nu=8.0), NuclearPenalty()],
    )
    def test_unitary_invariance(self, rng, kind):
        x = rng.standard_normal((4, 6))
        qo = random_orthogonal(rng, 4)
        po = random_orthogonal(rng, 6)
        assert abs(penalty_value(kind, qo @ x @ po) - penalty_value(kind, x)) <= 1e-10


class TestLatentPotential:
    def test_logdet_at_identity(self):
        p, eps = 4, 1e-3
        val = latent_potential(LogDetPenalty(nu=5.0, epsilon=eps), np.eye(p), q_dim=6)
        assert np.isclose(val, eps * p)

    def test_logdet_nu_equals_q_is_pure_trace(self, rng):
        q_dim = 5
        m = rng.standard_normal((3, 3))
        alpha = m @ m.T + np.eye(3)
        eps = 1e-2
        val = latent_potential(LogDetPenalty(nu=float(q_dim), epsilon=eps), alpha, q_dim)
        assert np.isclose(val, eps * np.trace(alpha))

    def test_nuclear_unsupported(self):
        with pytest.raises(ValueError):
            latent_potential(NuclearPenalty(), np.eye(2), 3)

    def test_scalar_schatten_formula(self):
        # dim-1 potential: K(a) = C_s a^{-s/(2-s)} + q log a + eps a
        s, eps, q_dim, a = 0.5, 1e-12, 7, 2.3
        val = latent_potential(
            SchattenPenalty(s=s, epsilon=eps), np.array([[a]]), q_dim
        )
        expected = (
            schatten_potential_coeff(s) * a ** (-1.0 / 3.0)
            + q_dim * np.log(a)
            + eps * a
        )
        assert np.isclose(val, expected, rtol=1e-12)


class TestSchattenCoefficients:
    def test_nuclear_case_value(self):
        # s = 1: the classical variational form of the nuclear norm has
        # weight 1/4 on tr(alpha^{-1})
        assert np.isclose(schatten_potential_coeff(1.0), 0.25)
        assert np.isclose(schatten_update_coeff(1.0), 0.5)

    def test_coefficients_consistent(self):
        # update multiplier solves the stationarity of the potential:
        # c = (C_s * t)^{(2-s)/2} with t = s/(2-s)
        for s in (0.25, 0.5, 0.75, 1.0):
            t = s / (2.0 - s)
            c = (schatten_potential_coeff(s) * t) ** ((2.0 - s) / 2.0)
            assert np.isclose(c, schatten_update_coeff(s), rtol=1e-12)

    def test_s1_conjugate_recovers_nuclear_exactly(self):
        # min_a {a z + C/a} = 2 sqrt(C z) = sqrt(z) iff C = 1/4
        z = 1.7
        lhs, rhs = conjugacy_check(
            SchattenPenalty(s=1.0, epsilon=1e-14), np.array([z]), q_dim=3
        )
        assert abs(lhs - np.sqrt(z)) <= 1e-6
        assert abs(rhs - np.sqrt(z)) <= 1e-6


def numeric_grad(f, z, h=1e-5):
    z = np.asarray(z, dtype=float)
    g = np.zeros_like(z)
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h * (1.0 + abs(z[i]))
        zm[i] -= h * (1.0 + abs(z[i]))
        g[i] = (f(zp) - f(zm)) / (zp[i] - zm[i])
    return g


class TestConjugacy:
    @pytest.mark.parametrize("dim", [1, 2, 3, 4])
    @pytest.mark.parametrize("s", [0.25, 0.5, 1.0])
    def test_schatten_value_match(self, rng, dim, s):
        kind = SchattenPenalty(s=s, epsilon=1e-3)
        z = rng.uniform(0.2, 5.0, size=dim)
        lhs, rhs = conjugacy_check(kind, z, q_dim=dim)
        assert abs(lhs - rhs) <= 1e-4 * (1.0 + abs(lhs))

    @pytest.mark.parametrize("dim", [1, 2, 3, 4])
    @pytest.mark.parametrize("s", [0.25, 0.5, 1.0])
    def test_schatten_derivative_match(self, rng, dim, s):
        kind = SchattenPenalty(s=s, epsilon=1e-3)
        z = rng.uniform(0.2, 5.0, size=dim)
        g_direct = numeric_grad(lambda zz: conjugacy_check(kind, zz, dim)[0], z)
        g_conj = numeric_grad(lambda zz: conjugacy_check(kind, zz, dim)[1], z)
        assert np.abs(g_direct - g_conj).max() <= 1e-5 * (1.0 + np.abs(g_direct).max())

    @pytest.mark.parametrize("dim", [1, 2, 3, 4])
    def test_logdet_derivative_match(self, rng, dim):
        # value sides differ by the additive constant nu - nu log nu
        kind = LogDetPenalty(nu=float(dim + 2), epsilon=1e-3)
        z = rng.uniform(0.2, 5.0, size=dim)
        g_direct = numeric_grad(lambda zz: conjugacy_check(kind, zz, dim)[0], z)
        g_conj = numeric_grad(lambda zz: conjugacy_check(kind, zz, dim)[1], z)
        assert np.abs(g_direct - g_conj).max() <= 1e-5 * (1.0 + np.abs(g_direct).max())
        lhs, rhs = conjugacy_check(kind, z, dim)
        nu = kind.nu
        assert abs((rhs - lhs) - (nu - nu * np.log(nu)) * dim) <= 1e-6 * (1 + abs(lhs))

    def test_schatten_stationary_point(self):
        # minimizer matches alpha = (s/2) (z + eps)^{s/2 - 1}
        s, eps = 0.5, 1e-3
        z = np.array([0.5, 2.0, 7.0])
        a = conjugate_minimizers(SchattenPenalty(s=s, epsilon=eps), z)
        assert np.allclose(a, (s / 2.0) * (z + eps) ** (s / 2.0 - 1.0), rtol=1e-10)

    def test_logdet_stationary_point(self):
        nu, eps = 6.0, 1e-3
        z = np.array([0.5, 2.0, 7.0])
        a = conjugate_minimizers(LogDetPenalty(nu=nu, epsilon=eps), z)
        assert np.allclose(a, nu / (z + eps), rtol=1e-10)

    def test_schatten_asymptotic_slope(self):
        # for large z both sides grow like z^{s/2}
        kind = SchattenPenalty(s=0.5, epsilon=1e-3)
        z1, z2 = 1e4, 1e6
        for side in (0, 1):
            v1 = conjugacy_check(kind, np.array([z1]), 1)[side]
            v2 = conjugacy_check(kind, np.array([z2]), 1)[side]
            slope = (np.log(v2) - np.log(v1)) / (np.log(z2) - np.log(z1))
            assert abs(slope - 0.25) <= 1e-3

    def test_bracket_failure_raises(self):
        # z large enough pushes the minimizer below the bracket
        kind = SchattenPenalty(s=0.5, epsilon=1e-6)
        with pytest.raises(NumericalError):
            conjugate_minimizers(kind, np.array([1e24]))


class TestPenaltyValidation:
    def test_schatten_s_range(self):
        with pytest.raises(ValueError):
            SchattenPenalty(s=0.0)
        with pytest.raises(ValueError):
            SchattenPenalty(s=1.5)
        with pytest.raises(ValueError):
            SchattenPenalty(s=0.5, epsilon=0.0)

    def test_logdet_nu_constraint(self):
        pen = LogDetPenalty(nu=3.0)
        with pytest.raises(ValueError):
            pen.resolve_nu(p=4, q=6)  # needs nu > 4
        assert LogDetPenalty().resolve_nu(p=4, q=6) == 6.0
