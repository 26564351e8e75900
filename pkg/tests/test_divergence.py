import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi
from scipy import stats

from ewdfit.divergence import (DPD, EWD, KL, L2, DensityGrid, antiderivative_term, b_prime,
                               b_second, b_third, b_value, divergence, ewd_b_closed_form,
                               ewd_b_series, ewd_b_simplified, make_generator, weight,
                               weight_prime)
from ewdfit.numerics import EULER_GAMMA, DomainError, e1_fast

GENERATORS = [EWD(0.01), EWD(0.25), EWD(1.0), EWD(4.0), DPD(0.1), DPD(0.5), DPD(1.0), KL, L2]


def _series_oracle(x, beta):
    mpmath.mp.dps = 60
    z = mpmath.mpf(x) / beta
    return float(mpmath.mpf(x) ** 2 / beta * mpmath.nsum(
        lambda n: (-z) ** n / (mpmath.factorial(n + 2) * (n + 1)), [0, mpmath.inf]))


class TestWeight:
    def test_ewd_zero_beta(self):
        assert weight(EWD(0.0), 0.37) == 1.0

    def test_ewd(self):
        assert weight(EWD(0.25), 0.25) == pytest.approx(1 - math.exp(-1), abs=1e-15)

    def test_dpd(self):
        assert weight(DPD(1.0), 0.5) == 0.5

    def test_kl_l2(self):
        assert weight(KL, 3.0) == 1.0
        assert weight(L2, 3.0) == 6.0

    def test_negative(self):
        with pytest.raises(DomainError):
            weight(EWD(1.0), -0.1)

    def test_ewd_bounds_monotone(self):
        t = np.logspace(-6, 3, 500)
        w = weight(EWD(0.3), t)
        assert np.all((w >= 0) & (w <= 1))
        assert np.all(np.diff(w) >= 0)
        assert w[-1] == pytest.approx(1.0)

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_weight_is_b_second_times_t(self, gen):
        t = np.logspace(-3, 1, 50)
        assert np.allclose(weight(gen, t), b_second(gen, t) * t, rtol=1e-12)
        assert np.all(b_second(gen, t) > 0)

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_weight_prime(self, gen):
        t = np.logspace(-2, 1, 30)
        h = 1e-6 * t
        fd = (weight(gen, t + h) - weight(gen, t - h)) / (2 * h)
        assert np.allclose(weight_prime(gen, t), fd, rtol=1e-6, atol=1e-8)
        assert np.allclose(weight_prime(gen, t), b_second(gen, t) + b_third(gen, t) * t, rtol=1e-10)


class TestGenerator:
    def test_ewd_value(self):
        # frozen from the 30-term series oracle
        assert b_value(EWD(1.0), 1.0) == pytest.approx(0.4287202, abs=5e-8)
        assert b_value(EWD(1.0), 1.0) == pytest.approx(_series_oracle(1.0, 1.0), rel=1e-14)

    def test_ewd_small(self):
        assert b_value(EWD(1.0), 1e-6) == pytest.approx(5.0e-13, rel=1e-6)

    def test_kl(self):
        assert b_value(KL, 1.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            b_value(EWD(1.0), 0.0)
        with pytest.raises(DomainError):
            b_value(EWD(0.0), 1.0)

    def test_ewd_vs_oracle_grid(self):
        beta = 0.3
        x = beta * np.logspace(-5, 1.5, 60)
        ref = np.array([_series_oracle(v, beta) for v in x])
        assert np.max(np.abs(b_value(EWD(beta), x) / ref - 1)) < 1e-12

    def test_closed_form_matches_outside_switch(self):
        x = np.logspace(-1, 1, 40)
        assert np.allclose(b_value(EWD(1.0), x), ewd_b_closed_form(x, 1.0), rtol=1e-12)

    def test_b_prime_ewd(self):
        assert b_prime(EWD(1.0), 1.0) == pytest.approx(0.7966, abs=1e-4)
        h = 1e-6
        fd = (b_value(EWD(1.0), 1 + h) - b_value(EWD(1.0), 1 - h)) / (2 * h)
        assert b_prime(EWD(1.0), 1.0) == pytest.approx(fd, abs=1e-6)

    def test_b_prime_kl_l2(self):
        assert b_prime(KL, math.e) == pytest.approx(2.0, abs=1e-15)
        assert b_prime(L2, 3.0) == 6.0

    def test_make_generator(self):
        assert make_generator("e", 0.25) == EWD(0.25)
        assert make_generator("mle") == KL
        with pytest.raises(ValueError):
            make_generator("xyz")


class TestAntiderivative:
    def test_zero(self):
        assert antiderivative_term(EWD(0.25), 0.0) == 0.0

    def test_ewd(self):
        ref = spi.quad(lambda s: 1 - math.exp(-s), 0, 1, epsabs=1e-13)[0]
        assert antiderivative_term(EWD(1.0), 1.0) == pytest.approx(ref, abs=1e-10)
        assert ref == pytest.approx(0.36788, abs=1e-5)

    def test_dpd_one(self):
        ref = spi.quad(lambda s: s, 0, 2)[0]
        assert antiderivative_term(DPD(1.0), 2.0) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_identity_with_b(self, gen):
        x = np.logspace(-2, 1, 25)
        assert np.allclose(antiderivative_term(gen, x), x * b_prime(gen, x) - b_value(gen, x),
                           rtol=1e-10, atol=1e-13)

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_derivative_is_weight(self, gen):
        x = np.logspace(-2, 1, 25)
        h = 1e-6 * x
        fd = (antiderivative_term(gen, x + h) - antiderivative_term(gen, x - h)) / (2 * h)
        assert np.allclose(fd, weight(gen, x), rtol=1e-6)


class TestDivergence:
    def _normal_grid(self, m1, m2, step):
        x = np.arange(-12, 12 + step / 2, step)
        w = np.full(x.shape, step)
        return DensityGrid(x, w, stats.norm.pdf(x, m1), stats.norm.pdf(x, m2))

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_identical(self, gen):
        grid = self._normal_grid(0.3, 0.3, 0.05)
        assert abs(divergence(gen, grid)) <= 1e-12

    def test_kl_pmf(self):
        pair = DensityGrid([0, 1], [1, 1], [0.5, 0.5], [0.9, 0.1])
        ref = 0.5 * math.log(5 / 9) + 0.5 * math.log(5)
        assert divergence(KL, pair) == pytest.approx(ref, abs=1e-14)
        assert ref == pytest.approx(0.5108, abs=1e-4)

    def test_ewd_richardson(self):
        coarse = divergence(EWD(0.25), self._normal_grid(0.0, 0.5, 0.02))
        fine = divergence(EWD(0.25), self._normal_grid(0.0, 0.5, 0.01))
        assert coarse > 0
        assert abs(coarse - fine) < 1e-6

    def test_kl_zero_model_density(self):
        with pytest.raises(DomainError):
            divergence(KL, DensityGrid([0, 1], [1, 1], [0.5, 0.5], [1.0, 0.0]))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            DensityGrid([0, 1], [1, 0], [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            DensityGrid([0, 1], [1, 1], [-0.5, 0.5], [0.5, 0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 3.0), min_size=3, max_size=12),
           st.lists(st.floats(1e-3, 3.0), min_size=3, max_size=12),
           st.sampled_from(GENERATORS))
    def test_nonnegative(self, g, f, gen):
        k = min(len(g), len(f))
        pair = DensityGrid(np.arange(k), np.ones(k), np.array(g[:k]), np.array(f[:k]))
        assert divergence(gen, pair) >= -1e-9

    def test_generator_equivalence(self):
        beta = 0.4
        x = np.linspace(-10, 10, 4001)
        w = np.full(x.shape, x[1] - x[0])
        g, f = stats.norm.pdf(x, 0.2, 1.1), stats.norm.pdf(x, -0.1, 0.9)
        keep = (g > 1e-300) & (f > 1e-300)
        x, w, g, f = x[keep], w[keep], g[keep], f[keep]
        z = f / beta
        full = (lambda t: ewd_b_closed_form(t, beta), EULER_GAMMA + e1_fast(z) + np.log(z))
        simple = (lambda t: ewd_b_simplified(t, beta), e1_fast(z) + np.log(z) + 1.0)

        def bregman(pair):
            b, bp = pair
            return np.sum(w * (b(g) - b(f) - (g - f) * bp))

        assert bregman(full) == pytest.approx(bregman(simple), abs=1e-10)
        assert bregman(full) == pytest.approx(divergence(EWD(beta), DensityGrid(x, w, g, f)), abs=1e-10)


class TestConvexity:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-4, 20.0), st.floats(1e-4, 20.0), st.sampled_from(GENERATORS))
    def test_midpoint(self, x1, x2, gen):
        mid = b_value(gen, 0.5 * (x1 + x2))
        assert mid <= 0.5 * (b_value(gen, x1) + b_value(gen, x2)) + 1e-10


class TestDerivativeChain:
    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_b_prime_fd(self, gen):
        x = np.logspace(-1.5, 1, 20)
        h = 1e-6
        fd = (b_value(gen, x + h) - b_value(gen, x - h)) / (2 * h)
        assert np.max(np.abs(b_prime(gen, x) - fd)) < 1e-6

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.label)
    def test_weight_second_difference(self, gen):
        x = np.logspace(-1, 1, 20)
        h = 1e-4 * x
        sd = (b_value(gen, x + h) - 2 * b_value(gen, x) + b_value(gen, x - h)) / h ** 2
        assert np.max(np.abs(weight(gen, x) - x * sd)) < 1e-5

    @pytest.mark.parametrize("beta", [0.05, 0.5, 2.0])
    def test_b_third_fd(self, beta):
        x = np.logspace(-1, 1, 20)
        h = 1e-6 * x
        fd = (b_second(EWD(beta), x + h) - b_second(EWD(beta), x - h)) / (2 * h)
        assert np.allclose(b_third(EWD(beta), x), fd, rtol=1e-6)


class TestSeries:
    def test_forty_term_series(self):
        # required property: 40 terms, |series - closed form| < 1e-10 on x/beta in [1e-4, 20]
        beta = 1.0
        x = beta * np.logspace(-4, np.log10(20), 200)
        err = np.abs(ewd_b_series(x, beta, terms=40) - b_value(EWD(beta), x))
        assert np.max(err) < 1e-10

    def test_adaptive_series(self):
        beta = 0.7
        x = beta * np.logspace(-4, np.log10(20), 200)
        err = np.abs(ewd_b_series(x, beta, terms=None) - b_value(EWD(beta), x))
        assert np.max(err) < 1e-10

    def test_forty_terms_fine_for_small_arguments(self):
        x = np.logspace(-4, 0, 50)
        assert np.max(np.abs(ewd_b_series(x, 1.0, terms=40) - b_value(EWD(1.0), x))) < 1e-14
