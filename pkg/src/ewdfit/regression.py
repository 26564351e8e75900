"""Minimum divergence estimation for normal linear regression.

Observation ``i`` has density ``N(x_i^T gamma, sigma^2)``. After
standardizing, the integral term of the objective is the same for every
observation, so each evaluation needs one quadrature (or closed form) in
``sigma`` and ``n`` density evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import sandwich
from .divergence import b_prime, weight
from .models import NormalLocationScale
from .numerics import DomainError, OptimizationError, OptimizerReport, minimize
from .models import _PHI_NORMAL, _T_NORMAL, _W_NORMAL

__all__ = [
    "RegressionData",
    "RegressionEstimate",
    "objective_inh",
    "estimate_regression",
    "psi_omega",
    "ols",
]

_NORMAL = NormalLocationScale()
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class RegressionData:
    """Design matrix ``X`` (``n x s``) and response ``y``."""

    X: np.ndarray
    y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        n, s = self.X.shape
        if self.y.size != n:
            raise ValueError("X and y have different numbers of rows")
        if not n > s:
            raise ValueError("need more observations than regression coefficients")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("regression data contain non-finite values")
        rank = np.linalg.matrix_rank(self.X, tol=1e-10 * max(1.0, np.abs(self.X).max()) * max(n, s))
        if rank < s:
            raise ValueError(f"design matrix is rank deficient (rank {rank} < {s})")
        if not self.names:
            self.names = tuple(f"x{j}" for j in range(s))

    @classmethod
    def from_columns(cls, predictors, y, intercept=True, names=None):
        """Build from predictor columns, prepending a column of ones."""
        P = np.asarray(predictors, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(P.shape[1])]
        if intercept:
            P = np.column_stack([np.ones(P.shape[0]), P])
            names = ["intercept"] + names
        return cls(P, y, tuple(names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def s(self):
        return self.X.shape[1]


@dataclass
class RegressionEstimate:
    """Fitted coefficients, error scale and sandwich asymptotics.

    ``covariance`` is ``Psi^{-1} Omega Psi^{-1}`` for
    ``sqrt(n) (theta_hat - theta)``, ``theta = (gamma, sigma)``.
    """

    gamma: np.ndarray
    sigma: float
    generator: object
    objective: float
    report: OptimizerReport
    psi: np.ndarray
    omega: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    n: int
    init: str = ""
    candidates: list = field(default_factory=list, repr=False)

    @property
    def theta(self):
        return np.append(self.gamma, self.sigma)

    def standard_errors(self):
        return np.sqrt(np.diag(self.covariance) / self.n)


def ols(data):
    """Least squares coefficients and residuals."""
    coef, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
    return coef, data.y - data.X @ coef


def _integral(gen, sigma):
    return float(_NORMAL._normal_closed(gen, np.asarray(float(sigma))))


def objective_inh(gen, data, theta):
    """Objective ``n^{-1} sum_i [int (f_i B' - B)(f_i) dy - B'(f_i(y_i))]``.

    ``theta = (gamma_1, ..., gamma_s, sigma)``.
    """
    th = np.asarray(theta, dtype=float)
    gamma, sigma = th[:-1], th[-1]
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    t = (data.y - data.X @ gamma) / sigma
    if gen.is_kl:
        dterm = np.mean(-0.5 * t * t - np.log(sigma) - _LOG_SQRT_2PI) + 1.0
    else:
        f = np.exp(-0.5 * t * t - _LOG_SQRT_2PI) / sigma
        dterm = np.mean(b_prime(gen, f))
    return _integral(gen, sigma) - dterm


def _elemental_starts(data, count, seed):
    # Exact fits through s randomly chosen points, scale from the residual MAD.
    n, s = data.X.shape
    gen = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        idx = gen.choice(n, size=s, replace=False)
        try:
            gamma = np.linalg.solve(data.X[idx], data.y[idx])
        except np.linalg.LinAlgError:
            continue
        res = data.y - data.X @ gamma
        scale = 1.4826 * np.median(np.abs(res))
        if scale > 0 and np.all(np.isfinite(gamma)):
            out.append(np.append(gamma, scale))
    return out


def estimate_regression(gen, data, init="auto", subsets=300, polish_best=3, seed=0, tie_tol=1e-10):
    """Minimum divergence regression fit.

    Parameters
    ----------
    gen : ConvexGenerator
    data : RegressionData
    init : {"auto", "ols"} or array_like
        ``"ols"`` starts from OLS coefficients with two scales (1.4826 times
        the residual MAD, and the ML residual s.d.). ``"auto"`` adds
        ``subsets`` elemental fits ranked by objective, of which the best
        ``polish_best`` are optimized too. An array is used as the only
        start. The lowest objective wins.
    seed : int
        Seed for drawing elemental subsets.
    """
    coef, res = ols(data)
    mad = 1.4826 * np.median(np.abs(res - np.median(res)))
    ml_sd = np.sqrt(np.mean(res ** 2))
    if isinstance(init, str):
        starts = []
        if mad > 0:
            starts.append(("ols-mad", np.append(coef, mad)))
        if ml_sd > 0:
            starts.append(("ols-ml", np.append(coef, ml_sd)))
        if not starts:
            raise ValueError("responses are fitted exactly; sigma is not identified")
        if init == "auto" and subsets > 0:
            cands = _elemental_starts(data, subsets, seed)
            scored = []
            for c in cands:
                try:
                    scored.append((objective_inh(gen, data, c), c))
                except DomainError:
                    continue
            scored.sort(key=lambda p: p[0])
            starts += [("elemental", c) for _, c in scored[:polish_best]]
        elif init not in ("auto", "ols"):
            raise ValueError(f"unknown init option {init!r}")
    else:
        starts = [("user", np.asarray(init, dtype=float))]

    # Optimize over delta = R gamma / sqrt(n) with X = Q R, which makes the
    # coefficient directions orthonormal and the problem well conditioned.
    _, R = np.linalg.qr(data.X)
    R = R / np.sqrt(data.n)

    def to_free(th):
        return np.append(R @ th[:-1], np.log(th[-1]))

    def from_free(phi):
        return np.append(np.linalg.solve(R, phi[:-1]), np.exp(phi[-1]))

    def fun(phi):
        return objective_inh(gen, data, from_free(phi))

    best = None
    candidates = []
    for label, th0 in starts:
        try:
            rep = minimize(fun, to_free(th0))
        except OptimizationError:
            continue
        candidates.append((label, from_free(rep.x), rep.fun))
        if best is None or rep.fun < best[1].fun - tie_tol:
            best = (label, rep)
    if best is None:
        raise OptimizationError("every start failed")
    label, rep = best
    if not rep.converged:
        raise OptimizationError("optimizer did not converge", rep)
    theta = from_free(rep.x)
    psi_n, omega_n = psi_omega(gen, data, theta)
    cov = sandwich(psi_n, omega_n)
    return RegressionEstimate(gamma=theta[:-1], sigma=float(theta[-1]), generator=gen,
                              objective=rep.fun, report=rep, psi=psi_n, omega=omega_n,
                              covariance=cov, residuals=data.y - data.X @ theta[:-1],
                              n=data.n, init=label, candidates=candidates)


def psi_omega(gen, data, theta):
    """At-model ``Psi_n = n^{-1} sum J^(i)`` and ``Omega_n = n^{-1} sum K^(i)``.

    With ``t = (y - x_i^T gamma)/sigma`` the score is
    ``(t x_i / sigma, (t^2 - 1)/sigma)``, so every block reduces to a
    standard-normal moment weighted by ``w(phi(t)/sigma)``.
    """
    th = np.asarray(theta, dtype=float)
    sigma = th[-1]
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    t, wq, phi = _T_NORMAL, _W_NORMAL, _PHI_NORMAL
    wt = np.asarray(weight(gen, phi / sigma))

    def mom(k, power=1):
        return float(np.sum(wq * phi * wt ** power * t ** k))

    m0, m1, m2, m3, m4 = (mom(k) for k in range(5))
    q0, q1, q2, q3, q4 = (mom(k, 2) for k in range(5))
    X = data.X
    n, s = X.shape
    xbar = X.mean(axis=0)
    xx = X.T @ X / n
    s2 = sigma * sigma

    psi_n = np.zeros((s + 1, s + 1))
    psi_n[:s, :s] = xx * m2 / s2
    psi_n[:s, s] = psi_n[s, :s] = xbar * (m3 - m1) / s2
    psi_n[s, s] = (m4 - 2 * m2 + m0) / s2

    xi_g, xi_s = m1 / sigma, (m2 - m0) / sigma
    omega = np.zeros((s + 1, s + 1))
    omega[:s, :s] = xx * (q2 / s2 - xi_g ** 2)
    omega[:s, s] = omega[s, :s] = xbar * ((q3 - q1) / s2 - xi_g * xi_s)
    omega[s, s] = (q4 - 2 * q2 + q0) / s2 - xi_s ** 2
    return psi_n, omega
