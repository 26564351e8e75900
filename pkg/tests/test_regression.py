import numpy as np
import pytest

from ewdfit.asymptotics import model_matrices
from ewdfit.datasets import DataError, load_dataset
from ewdfit.divergence import DPD, EWD, KL, L2
from ewdfit.estimation import objective_iid
from ewdfit.models import NormalLocationScale
from ewdfit.numerics import rng, substream
from ewdfit.regression import (RegressionData, estimate_regression, objective_inh, ols,
                               psi_omega)

GENS = [EWD(0.02), EWD(0.25), EWD(1.0), DPD(0.5), L2, KL]


def _clean(n=200, seed=0):
    g = rng(seed)
    x = g.uniform(-2, 3, n)
    return RegressionData.from_columns(x, 1.0 - 0.5 * x + 0.7 * g.standard_normal(n))


def _homicide():
    try:
        return load_dataset("homicide").regression()
    except DataError as exc:
        pytest.fail(f"homicide fixture missing: {exc}")


class TestData:
    def test_rank_deficient(self):
        x = np.arange(10.0)
        with pytest.raises(ValueError, match="rank"):
            RegressionData(np.column_stack([np.ones(10), x, 2 * x]), x)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            RegressionData(np.ones((2, 2)), [1.0, 2.0])

    def test_intercept_column(self):
        d = RegressionData.from_columns(np.arange(5.0), np.arange(5.0))
        assert np.array_equal(d.X[:, 0], np.ones(5)) and d.names[0] == "intercept"


class TestObjective:
    def test_beta_zero_is_ols(self):
        d = _clean()
        coef, res = ols(d)
        est = estimate_regression(EWD(1e-6), d)
        assert np.allclose(est.gamma, coef, atol=1e-4)
        assert est.sigma == pytest.approx(np.sqrt(np.mean(res ** 2)), abs=1e-4)

    @pytest.mark.parametrize("gen", GENS, ids=lambda g: g.label)
    def test_intercept_only_reduction(self, gen):
        y = rng(3).normal(2.0, 1.5, 60)
        d = RegressionData(np.ones((60, 1)), y)
        for th in ([2.0, 1.5], [1.7, 0.9]):
            assert objective_inh(gen, d, th) == pytest.approx(
                objective_iid(gen, NormalLocationScale(), y, th), abs=1e-10)

    @pytest.mark.parametrize("gen", GENS, ids=lambda g: g.label)
    def test_location_invariance(self, gen):
        d = _clean(50, 4)
        shifted = RegressionData(d.X, d.y + 3.25)
        th = np.array([0.9, -0.4, 0.8])
        assert objective_inh(gen, d, th) == pytest.approx(
            objective_inh(gen, shifted, th + [3.25, 0, 0]), abs=1e-10)

    def test_sigma_domain(self):
        with pytest.raises(ValueError):
            objective_inh(EWD(0.1), _clean(), [0.0, 0.0, -1.0])


class TestEstimate:
    def test_telephone(self):
        est = estimate_regression(EWD(0.05), load_dataset("telephone").regression())
        assert est.gamma == pytest.approx([-5.18, 0.11], abs=0.02)
        assert est.sigma == pytest.approx(0.09, abs=0.02)

    def test_stars(self):
        est = estimate_regression(EWD(0.25), load_dataset("stars").regression())
        assert est.gamma == pytest.approx([-8.537, 3.057], abs=0.05)

    def test_estimating_equations(self):
        d = load_dataset("stars").regression()
        est = estimate_regression(EWD(0.25), d)
        h = 1e-6 * (1 + np.abs(est.theta))
        grad = [(objective_inh(EWD(0.25), d, est.theta + e) - objective_inh(EWD(0.25), d, est.theta - e))
                / (2 * hi) for e, hi in zip(np.diag(h), h)]
        assert np.linalg.norm(grad) <= 1e-6

    def test_residuals(self):
        d = _clean()
        est = estimate_regression(EWD(0.25), d)
        assert np.allclose(est.residuals, d.y - d.X @ est.gamma)

    def test_homicide_ewd(self):
        est = estimate_regression(EWD(0.02), _homicide())
        assert est.gamma == pytest.approx([0.356, -3.042e-6], rel=0.01)
        assert est.sigma == pytest.approx(0.111, rel=0.01)

    def test_homicide_slope_reversal(self):
        d = _homicide()
        assert np.sign(ols(d)[0][1]) == 1
        assert np.sign(estimate_regression(EWD(0.002), d).gamma[1]) == -1

    def test_homicide_outlier_deletion(self):
        d = _homicide()
        us = int(np.argmax(np.abs(ols(d)[1])))
        keep = np.arange(d.n) != us
        coef = ols(RegressionData(d.X[keep], d.y[keep]))[0]
        est = estimate_regression(EWD(0.002), d)
        assert np.allclose(np.round(est.gamma, 3), np.round(coef, 3))


class TestPsiOmega:
    def test_mle_limit(self):
        d = _clean()
        sigma = 0.8
        P, O = psi_omega(EWD(1e-9), d, [1.0, -0.5, sigma])
        ref = d.X.T @ d.X / (d.n * sigma ** 2)
        assert np.allclose(P[:2, :2], ref, rtol=1e-6)
        assert np.allclose(O[:2, :2], ref, rtol=1e-6)
        assert P[2, 2] == pytest.approx(2 / sigma ** 2, rel=1e-6)

    @pytest.mark.parametrize("gen", GENS, ids=lambda g: g.label)
    def test_intercept_only(self, gen):
        d = RegressionData(np.ones((30, 1)), rng(6).standard_normal(30))
        P, O = psi_omega(gen, d, [0.4, 1.3])
        b = model_matrices(gen, NormalLocationScale(), [0.4, 1.3])
        assert np.allclose(P, b.J, atol=1e-8)
        assert np.allclose(O, b.K, atol=1e-8)

    def test_psd(self):
        d = load_dataset("alcohol").regression()
        P, O = psi_omega(EWD(0.25), d, np.append(ols(d)[0], 0.4))
        assert np.linalg.eigvalsh(P).min() > 0 and np.linalg.eigvalsh(O).min() >= -1e-12

    def test_psd_homicide(self):
        d = _homicide()
        P, O = psi_omega(EWD(0.25), d, np.append(ols(d)[0], 0.1))
        assert np.linalg.eigvalsh(P).min() > 0 and np.linalg.eigvalsh(O).min() >= -1e-12


class TestSandwich:
    def test_consistency(self):
        n, reps, gen = 2000, 500, EWD(0.25)
        theta0 = np.array([1.0, 2.0, 1.5])
        draws = np.empty((reps, 3))
        for i in range(reps):
            g = substream(2024, i)
            x = g.standard_normal(n)
            d = RegressionData.from_columns(x, theta0[0] + theta0[1] * x + theta0[2] * g.standard_normal(n))
            draws[i] = estimate_regression(gen, d, init="ols").theta
        emp = np.cov(np.sqrt(n) * (draws - theta0), rowvar=False)
        g = substream(2024, 0)
        x = g.standard_normal(n)
        d = RegressionData.from_columns(x, x)
        P, O = psi_omega(gen, d, theta0)
        Pi = np.linalg.inv(P)
        th = Pi @ O @ Pi
        scale = np.sqrt(np.outer(np.diag(th), np.diag(th)))
        assert np.all(np.abs(emp - th) <= 0.15 * scale)
