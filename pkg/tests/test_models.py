import numpy as np
import pytest
from scipy import stats

from ewdfit.datasets import DROSOPHILA, SHOSHONI
from ewdfit.models import (DegenerateFitError, ExponentialMean, NormalLocationScale, NormalMean,
                           NormalScale, Poisson, get_model)
from ewdfit.numerics import DomainError, rng

MODELS = [
    (NormalLocationScale(), [0.4, 1.7]),
    (NormalMean(sigma=1.3), [-0.8]),
    (NormalScale(mu=0.5), [0.6]),
    (ExponentialMean(), [2.5]),
    (Poisson(), [0.4]),
    (Poisson(), [6.0]),
]
IDS = ["normal", "normal-mean", "normal-scale", "exponential", "poisson-small", "poisson-large"]


class TestDensities:
    def test_normal(self):
        x = np.linspace(-3, 3, 7)
        assert np.allclose(NormalLocationScale().pdf(x, [0.5, 2.0]), stats.norm.pdf(x, 0.5, 2.0),
                           rtol=1e-14)

    def test_exponential(self):
        x = np.array([0.0, 0.3, 4.0])
        assert np.allclose(ExponentialMean().pdf(x, [2.0]), stats.expon.pdf(x, scale=2.0), rtol=1e-14)

    def test_poisson(self):
        k = np.arange(10.0)
        assert np.allclose(Poisson().pdf(k, [3.059]), stats.poisson.pmf(k, 3.059), rtol=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            NormalLocationScale().check([0.0, -1.0])
        with pytest.raises(DomainError):
            Poisson().check([0.0])

    def test_registry(self):
        assert isinstance(get_model("normal"), NormalLocationScale)
        assert isinstance(get_model("poisson"), Poisson)
        with pytest.raises(ValueError):
            get_model("gamma")


class TestMLE:
    def test_shoshoni(self):
        x = np.array(SHOSHONI)
        mu, sigma = NormalLocationScale().mle(x, ddof=1)
        # mean 13.21 / 20 = 0.6605 sits on the rounding boundary of 0.660
        assert abs(mu - 0.660) <= 5e-4 + 1e-12
        assert round(sigma, 3) == 0.093
        # divisor n is the default
        assert NormalLocationScale().mle(x)[1] == pytest.approx(np.std(x), rel=1e-14)

    def test_drosophila(self):
        assert Poisson().mle(np.array(DROSOPHILA))[0] == pytest.approx(3.059, abs=5e-4)

    def test_constant_exponential(self):
        assert ExponentialMean().mle(np.full(9, 1.7))[0] == pytest.approx(1.7, rel=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateFitError):
            NormalLocationScale().mle(np.full(5, 2.0))

    def test_empty(self):
        with pytest.raises(ValueError):
            NormalMean().mle(np.array([]))


class TestSimulate:
    def test_normal_mean_band(self):
        x = NormalLocationScale().simulate([0.0, 1.0], 100_000, rng(1))
        assert abs(x.mean()) < 0.02

    def test_exponential_band(self):
        x = ExponentialMean().simulate([1.0], 100_000, rng(2))
        assert 0.985 < x.mean() < 1.015

    def test_poisson_support(self):
        x = Poisson().simulate([0.4], 5000, rng(3))
        assert np.all(x >= 0) and np.all(x == np.round(x))


class TestIdentities:
    @pytest.mark.parametrize("model,theta", MODELS, ids=IDS)
    def test_score_mean_zero(self, model, theta):
        x, w = model.quadrature(np.array(theta))
        f = model.pdf(x, np.array(theta))
        assert np.all(np.abs((w * f) @ model.score(x, np.array(theta))) < 1e-8)

    @pytest.mark.parametrize("model,theta", MODELS, ids=IDS)
    def test_quadrature_mass(self, model, theta):
        x, w = model.quadrature(np.array(theta))
        assert np.sum(w * model.pdf(x, np.array(theta))) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("model,theta", MODELS, ids=IDS)
    def test_bartlett(self, model, theta):
        th = np.array(theta)
        x, w = model.quadrature(th)
        f = model.pdf(x, th)
        outer = model.fisher_information(th)
        jac = np.tensordot(w * f, model.neg_score_jac(x, th), axes=(0, 0))
        assert np.allclose(outer, jac, atol=1e-6, rtol=1e-6)

    def test_normal_fisher(self):
        assert np.allclose(NormalLocationScale().fisher_information([0.2, 2.0]),
                           np.diag([0.25, 0.5]), atol=1e-12)

    def test_score_matches_log_density_gradient(self):
        m = NormalLocationScale()
        th = np.array([0.3, 1.4])
        x = np.linspace(-4, 4, 9)
        h = 1e-6
        fd = np.column_stack([(m.logpdf(x, th + h * e) - m.logpdf(x, th - h * e)) / (2 * h)
                              for e in np.eye(2)])
        assert np.allclose(m.score(x, th), fd, atol=1e-7)

    def test_location_equivariance(self):
        m = NormalLocationScale()
        x = np.linspace(-5, 5, 41)
        for c in (0.0, 0.5, 4.0):
            assert np.array_equal(m.pdf(x + c, [1.0 + c, 0.7]) > 0, m.pdf(x, [1.0, 0.7]) > 0)
            assert np.allclose(m.pdf(x + c, [1.0 + c, 0.7]), m.pdf(x, [1.0, 0.7]), rtol=1e-12)
