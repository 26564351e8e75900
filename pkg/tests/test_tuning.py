import numpy as np
import pytest

from ewdfit.asymptotics import model_matrices
from ewdfit.datasets import DROSOPHILA, SHOSHONI, load_dataset
from ewdfit.divergence import DPD, EWD
from ewdfit.models import NormalLocationScale, NormalMean, Poisson
from ewdfit.numerics import rng
from ewdfit.tuning import (default_grid, mse_hat, select_beta, select_beta_regression)
from ewdfit.estimation import estimate_iid

STEP_GRID = np.round(np.arange(1, 201) * 0.01, 2)


class TestMseHat:
    def test_zero_bias(self):
        m, gen, th = NormalLocationScale(), EWD(0.3), np.array([0.1, 1.2])
        trace = np.trace(model_matrices(gen, m, th).covariance) / 50
        assert mse_hat(gen, m, th, th, 50) == pytest.approx(trace, rel=1e-14)

    def test_shoshoni(self):
        m = NormalLocationScale()
        pilot = estimate_iid(DPD(1.0), m, SHOSHONI).theta
        th = estimate_iid(EWD(0.43), m, SHOSHONI).theta
        assert 20 * mse_hat(EWD(0.43), m, th, pilot, 20) == pytest.approx(5.07e-3, rel=0.05)

    def test_drosophila(self):
        m = Poisson()
        pilot = estimate_iid(DPD(1.0), m, DROSOPHILA).theta
        th = estimate_iid(EWD(0.08), m, DROSOPHILA).theta
        assert 34 * mse_hat(EWD(0.08), m, th, pilot, 34) == pytest.approx(0.46, rel=0.05)


class TestSelect:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            select_beta(Poisson(), DROSOPHILA, [0.2, 0.1])
        with pytest.raises(ValueError):
            select_beta(Poisson(), DROSOPHILA, [])

    def test_default_grid(self):
        g = default_grid([0.43])
        assert g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(4.0)
        assert 0.43 in g and g.size == 61

    def test_drosophila(self):
        res = select_beta(Poisson(), DROSOPHILA, STEP_GRID)
        assert abs(res.beta_opt - 0.08) <= 0.01 + 1e-12
        assert res.theta_opt[0] == pytest.approx(0.377, abs=5e-3)
        assert res.pilot_label == "DPD(1)"
        assert res.mse[np.searchsorted(STEP_GRID, res.beta_opt)] == np.nanmin(res.mse)

    def test_shoshoni(self):
        res = select_beta(NormalLocationScale(), SHOSHONI, STEP_GRID)
        assert abs(res.beta_opt - 0.43) <= 0.01 + 1e-12

    def test_alcohol(self):
        d = load_dataset("alcohol").regression()
        grid = np.unique(np.round(np.concatenate([default_grid(), np.arange(0.55, 0.78, 0.01)]), 10))
        res = select_beta_regression(d, grid)
        assert abs(res.beta_opt - 0.66) <= 0.05
        assert res.theta_opt[:4] == pytest.approx([6.084, 0.112, -0.135, 0.174], rel=0.02)


class TestProperties:
    def test_pilot_invariance(self):
        m = NormalLocationScale()
        theta0 = np.array([0.0, 1.0])
        x = m.simulate(theta0, 100, rng(41))
        grid = np.round(np.arange(1, 61) * 0.02, 2)
        a = select_beta(m, x, grid)
        b = select_beta(m, x, grid, pilot=theta0)
        assert abs(np.searchsorted(grid, a.beta_opt) - np.searchsorted(grid, b.beta_opt)) <= 2

    def test_trace_monotone(self):
        m = NormalMean()
        grid = default_grid()
        trace = [model_matrices(EWD(b), m, [0.0]).covariance[0, 0] for b in grid]
        assert np.all(np.diff(trace) >= -1e-12)
