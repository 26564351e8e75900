import math

import mpmath
import numpy as np
import pytest
from scipy import special, stats

from ewdfit.numerics import (EULER_GAMMA, DomainError, IntegrationDomain, e1_fast, ein, em1z,
                             exp_integral_e1, gauss_legendre_panels, integrate, minimize,
                             product_eigvals, rng, substream, sym_eigvals)


class TestExpIntegral:
    def test_value_at_one(self):
        assert exp_integral_e1(1.0) == pytest.approx(0.21938393439552, rel=1e-12)

    def test_value_at_ten(self):
        assert exp_integral_e1(10.0) == pytest.approx(4.15697e-6, rel=1e-5)

    def test_asymptotic_ratio(self):
        z = 50.0
        assert abs(math.exp(z) * exp_integral_e1(z) * z - 1) < 0.025

    @pytest.mark.parametrize("z", [1e-8, 1e-3, 0.3, 0.999, 1.0, 1.001, 2.5, 7.0, 30.0, 300.0])
    def test_relative_error_vs_mpmath(self, z):
        ref = float(mpmath.e1(mpmath.mpf(z)))
        assert abs(exp_integral_e1(z) / ref - 1) < 1e-12

    def test_fast_path_matches(self):
        z = np.logspace(-6, 2.5, 300)
        own = np.array([exp_integral_e1(v) for v in z])
        assert np.max(np.abs(e1_fast(z) / own - 1)) < 1e-13

    def test_small_argument_series(self):
        # required range z < 0.05; the omitted z^3/18 term is 6.9e-6 at 0.05
        worst = max(abs(exp_integral_e1(z) - (-EULER_GAMMA - math.log(z) + z - z * z / 4))
                    for z in np.linspace(1e-4, 0.05, 40))
        assert worst < 1e-8

    def test_small_argument_series_truncation_order(self):
        for z in np.linspace(1e-4, 0.05, 40):
            approx = -EULER_GAMMA - math.log(z) + z - z * z / 4
            assert abs(exp_integral_e1(z) - approx - z ** 3 / 18) < z ** 4 / 90 + 1e-14

    @pytest.mark.parametrize("z", [0.0, -1.0, float("nan")])
    def test_domain(self, z):
        with pytest.raises(DomainError):
            exp_integral_e1(z)


class TestEinAndExpm1:
    def test_ein_vs_mpmath(self):
        mpmath.mp.dps = 40
        z = np.logspace(-6, 2, 200)
        ref = np.array([float(mpmath.euler + mpmath.log(v) + mpmath.e1(v)) for v in z])
        assert np.max(np.abs(ein(z) / ref - 1)) < 1e-14

    def test_em1z_vs_mpmath(self):
        mpmath.mp.dps = 40
        z = np.logspace(-8, 2, 200)
        ref = np.array([float(mpmath.expm1(-mpmath.mpf(v)) + v) for v in z])
        assert np.max(np.abs(em1z(z) / ref - 1)) < 1e-14

    def test_scalars(self):
        assert isinstance(float(ein(0.5)), float)
        assert em1z(0.0) == 0.0


class TestIntegrate:
    def test_normal_mass(self):
        assert integrate(stats.norm.pdf, IntegrationDomain("real")) == pytest.approx(1, abs=1e-10)

    def test_normal_variance(self):
        val = integrate(lambda x: x * x * stats.norm.pdf(x), IntegrationDomain("real"))
        assert val == pytest.approx(1, abs=1e-9)

    def test_poisson_mass(self):
        pmf = lambda k: stats.poisson.pmf(k, 0.4)
        dom = IntegrationDomain("discrete", lower=0, mass=pmf)
        assert integrate(pmf, dom) == pytest.approx(1, abs=1e-12)

    def test_half_line(self):
        val = integrate(lambda x: np.exp(-x), IntegrationDomain("half", lower=0.0))
        assert val == pytest.approx(1, abs=1e-10)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            IntegrationDomain("interval", lower=1, upper=0)
        with pytest.raises(ValueError):
            IntegrationDomain("discrete", tail_mass=0.1)

    @pytest.mark.parametrize("degree", range(0, 20))
    def test_gauss_legendre_exact(self, degree):
        x, w = gauss_legendre_panels(-1.3, 2.1, 10.0, order=10)
        exact = (2.1 ** (degree + 1) - (-1.3) ** (degree + 1)) / (degree + 1)
        assert np.sum(w * x ** degree) == pytest.approx(exact, rel=1e-12, abs=1e-12)


class TestMinimize:
    def test_quadratic(self):
        rep = minimize(lambda x: (x[0] - 2) ** 2, [0.0])
        assert rep.converged and abs(rep.x[0] - 2) < 1e-8

    def test_rosenbrock(self):
        f = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
        rep = minimize(f, [-1.2, 1.0])
        assert np.allclose(rep.x, [1, 1], atol=1e-6)

    def test_plateau(self):
        rep = minimize(lambda x: 3.0, [0.7, -0.2])
        assert rep.converged
        assert np.array_equal(rep.x, [0.7, -0.2])

    def test_idempotent(self):
        f = lambda x: (x[0] - 1) ** 2 + 3 * (x[1] + 0.5) ** 2 + x[0] * x[1]
        a = minimize(f, [4.0, 4.0])
        b = minimize(f, a.x)
        assert np.linalg.norm(b.x - a.x) < 1e-7

    def test_deterministic(self):
        f = lambda x: np.cosh(x[0] - 0.3) + (x[1] - x[0]) ** 2
        assert np.array_equal(minimize(f, [2.0, 0.0]).x, minimize(f, [2.0, 0.0]).x)

    def test_report_converged_flag(self):
        rep = minimize(lambda x: np.sum((x - 1.5) ** 2), [0.0, 0.0, 0.0])
        assert rep.converged and rep.grad_norm <= 1e-6


class TestEigen:
    def test_identity(self):
        assert np.allclose(sym_eigvals(np.eye(3)), [1, 1, 1])

    def test_diagonal(self):
        assert np.allclose(sym_eigvals(np.diag([5.0, 2.0, 0.0])), [5, 2, 0])

    def test_two_by_two(self):
        assert np.allclose(sym_eigvals([[2.0, 1.0], [1.0, 2.0]]), [3, 1])

    def test_non_square(self):
        with pytest.raises(ValueError):
            sym_eigvals(np.ones((2, 3)))

    def test_product_similarity(self):
        g = np.random.default_rng(3)
        for _ in range(20):
            a = g.normal(size=(4, 4))
            a = a + a.T
            b = g.normal(size=(4, 2))
            s = b @ b.T
            direct = np.sort(np.real(np.linalg.eigvals(a @ s)))[::-1]
            assert np.allclose(product_eigvals(a, s), direct, atol=1e-8)


class TestRandom:
    def test_determinism(self):
        assert np.array_equal(rng(11).standard_normal(1000), rng(11).standard_normal(1000))

    def test_mean_band(self):
        assert abs(rng(5).standard_normal(1_000_000).mean()) < 0.004

    def test_substreams_differ(self):
        a = substream(9, 1).standard_normal(10)
        b = substream(9, 2).standard_normal(10)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, substream(9, 1).standard_normal(10))
