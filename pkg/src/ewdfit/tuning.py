"""Data-driven choice of the EWD tuning parameter.

For each candidate ``beta`` the mean square error of the fit is estimated as

    ||theta_beta - theta_pilot||^2 + trace(J^{-1} K J^{-1}) / n

with the at-model sandwich matrices evaluated at ``theta_beta`` and the
minimum L2 estimate (``DPD(1)``) as pilot. The grid minimizer is returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import model_matrices
from .divergence import DPD, EWD
from .estimation import estimate_iid
from .regression import estimate_regression, psi_omega
from .asymptotics import sandwich

__all__ = [
    "TuningResult",
    "default_grid",
    "mse_hat",
    "mse_hat_regression",
    "select_beta",
    "select_beta_regression",
]


@dataclass
class TuningResult:
    """Estimated MSE over a ``beta`` grid.

    ``mse`` holds ``MSE_hat`` per grid point (``nan`` where the fit failed);
    ``scaled_mse`` is ``n * MSE_hat``, the scale on which the criterion is
    usually reported.
    """

    grid: np.ndarray
    estimates: np.ndarray
    mse: np.ndarray
    beta_opt: float
    theta_opt: np.ndarray
    pilot: np.ndarray
    pilot_label: str
    n: int
    failures: dict = field(default_factory=dict)

    @property
    def scaled_mse(self):
        return self.n * self.mse

    @property
    def mse_opt(self):
        return float(self.mse[np.nanargmin(self.mse)])


def default_grid(extra=()):
    """60 log-spaced points on ``[1e-3, 4]`` merged with ``extra``."""
    g = np.concatenate([np.geomspace(1e-3, 4.0, 60), np.asarray(extra, dtype=float)])
    return np.unique(np.round(g, 12))


def mse_hat(gen, model, theta_hat, theta_pilot, n):
    """Estimated MSE of an i.i.d. fit relative to the pilot."""
    th = np.asarray(theta_hat, dtype=float)
    bias = th - np.asarray(theta_pilot, dtype=float)
    cov = model_matrices(gen, model, th).covariance
    return float(bias @ bias + np.trace(cov) / n)


def mse_hat_regression(gen, data, theta_hat, theta_pilot):
    """Estimated MSE of a regression fit using ``Psi^{-1} Omega Psi^{-1}``."""
    th = np.asarray(theta_hat, dtype=float)
    bias = th - np.asarray(theta_pilot, dtype=float)
    psi_n, omega_n = psi_omega(gen, data, th)
    return float(bias @ bias + np.trace(sandwich(psi_n, omega_n)) / data.n)


def _check_grid(grid):
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0:
        raise ValueError("tuning grid is empty")
    if np.any(np.diff(g) <= 0):
        raise ValueError("tuning grid must be strictly increasing")
    if np.any(g <= 0):
        raise ValueError("tuning grid values must be positive")
    return g


def _finish(g, thetas, mses, pilot, label, n, failures):
    mses = np.asarray(mses, dtype=float)
    if np.all(np.isnan(mses)):
        raise RuntimeError(f"every grid fit failed: {failures}")
    # first occurrence of the minimum is the smallest beta
    i = int(np.nanargmin(mses))
    return TuningResult(grid=g, estimates=np.asarray(thetas), mse=mses, beta_opt=float(g[i]),
                        theta_opt=np.asarray(thetas[i]), pilot=np.asarray(pilot),
                        pilot_label=label, n=n, failures=failures)


def select_beta(model, data, grid=None, pilot=None):
    """Grid search for the ``beta`` minimizing :func:`mse_hat`.

    Parameters
    ----------
    model : ParametricModel
    data : array_like
    grid : array_like, optional
        Strictly increasing positive values; :func:`default_grid` if omitted.
    pilot : array_like, optional
        Pilot estimate; defaults to the minimum L2 fit.
    """
    x = np.asarray(data, dtype=float).ravel()
    g = _check_grid(default_grid() if grid is None else grid)
    if pilot is None:
        pilot, label = estimate_iid(DPD(1.0), model, x).theta, "DPD(1)"
    else:
        pilot, label = np.asarray(pilot, dtype=float), "user"
    thetas, mses, failures = [], [], {}
    for b in g:
        gen = EWD(b)
        try:
            th = estimate_iid(gen, model, x).theta
            val = mse_hat(gen, model, th, pilot, x.size)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            failures[float(b)] = str(exc)
            th, val = np.full(model.p, np.nan), np.nan
        thetas.append(th)
        mses.append(val)
    return _finish(g, thetas, mses, pilot, label, x.size, failures)


def select_beta_regression(data, grid=None, pilot=None, **fit_options):
    """Regression analogue of :func:`select_beta` over ``(gamma, sigma)``."""
    g = _check_grid(default_grid() if grid is None else grid)
    if pilot is None:
        pilot, label = estimate_regression(DPD(1.0), data, **fit_options).theta, "DPD(1)"
    else:
        pilot, label = np.asarray(pilot, dtype=float), "user"
    thetas, mses, failures = [], [], {}
    for b in g:
        gen = EWD(b)
        try:
            th = estimate_regression(gen, data, **fit_options).theta
            val = mse_hat_regression(gen, data, th, pilot)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            failures[float(b)] = str(exc)
            th, val = np.full(data.s + 1, np.nan), np.nan
        thetas.append(th)
        mses.append(val)
    return _finish(g, thetas, mses, pilot, label, data.n, failures)
