"""Restricted estimation and Bregman divergence tests.

Under ``H0: m(theta) = 0`` with ``r`` affine restrictions, the statistic
``T = 2 n D_{B2}(f_hat, f_tilde)`` between the unrestricted and restricted
fits is asymptotically ``sum_i lambda_i Z_i^2`` where ``lambda_i`` are the
nonzero eigenvalues of ``A (B K B)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as _la
from scipy import stats as _st

from .asymptotics import model_matrices, _inv
from .divergence import DensityGrid, EWD, b_second, divergence, weight
from .estimation import Estimate, _check_data, estimate_iid, objective_iid
from .models import NormalLocationScale
from .numerics import DomainError, OptimizationError, minimize, product_eigvals, substream

__all__ = [
    "ConstraintSet",
    "TestResult",
    "estimate_restricted",
    "restricted_vcov",
    "bdts",
    "null_eigenvalues",
    "mc_pvalue",
    "ewdts_normal_mean",
    "pvalue_curve",
    "EigenvalueCountError",
]


class EigenvalueCountError(RuntimeError):
    """The number of numerically nonzero eigenvalues differs from ``r``."""


@dataclass
class ConstraintSet:
    """Affine restrictions ``R theta = c``.

    ``jacobian`` is ``M = R^T`` (``p x r``). Feasible points are
    ``theta0 + N phi`` with ``N`` an orthonormal basis of the null space of
    ``R``.
    """

    R: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.c = np.asarray(self.c, dtype=float).ravel()
        r, p = self.R.shape
        if self.c.size != r:
            raise ValueError("R and c disagree on the number of restrictions")
        if r and np.linalg.matrix_rank(self.R) != r:
            raise ValueError("restrictions are linearly dependent")
        if r >= p:
            raise ValueError("need fewer restrictions than parameters")

    @classmethod
    def none(cls, p):
        return cls(np.zeros((0, p)), np.zeros(0))

    @classmethod
    def fix(cls, p, index, value):
        """Fix coordinates ``index`` at ``value``."""
        idx = np.atleast_1d(index)
        R = np.zeros((idx.size, p))
        R[np.arange(idx.size), idx] = 1.0
        return cls(R, np.broadcast_to(np.asarray(value, dtype=float), idx.shape))

    @property
    def p(self):
        return self.R.shape[1]

    @property
    def r(self):
        return self.R.shape[0]

    def m(self, theta):
        return self.R @ np.asarray(theta, dtype=float) - self.c

    def jacobian(self, theta=None):
        return self.R.T

    @property
    def fixed_coordinates(self):
        """Indices fixed by unit-vector rows, or ``None`` for general rows."""
        rows = self.R
        if not self.r:
            return np.array([], dtype=int)
        ok = np.all((rows == 0) | (rows == 1), axis=1) & (np.sum(rows == 1, axis=1) == 1)
        if not ok.all():
            return None
        return np.argmax(rows, axis=1)

    def particular(self):
        if not self.r:
            return np.zeros(self.p)
        return np.linalg.lstsq(self.R, self.c, rcond=None)[0]

    def null_basis(self):
        if not self.r:
            return np.eye(self.p)
        return _la.null_space(self.R)


@dataclass
class TestResult:
    """Outcome of a Bregman divergence test."""

    __test__ = False  # not a pytest class

    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    statistic: float
    eigenvalues: np.ndarray
    pvalue: float
    reps: int
    seed: int
    beta: float = np.nan
    gamma: float = np.nan


def estimate_restricted(gen, model, data, constraints, init="auto"):
    """Minimize the objective over ``{theta : R theta = c}``.

    Coordinate-fixing restrictions keep the model's log transform for the
    free positive coordinates; general affine restrictions search the
    null-space coordinates directly and rely on the domain check.
    """
    x = _check_data(model, data)
    if constraints.p != model.p:
        raise ValueError("constraint dimension does not match the model")
    if constraints.r == 0:
        return estimate_iid(gen, model, x, init=init)

    fixed = constraints.fixed_coordinates
    starts = [model.robust_init(x)]
    try:
        starts.append(model.mle(x))
    except ValueError:
        pass

    if fixed is not None:
        free = np.setdiff1d(np.arange(model.p), fixed)
        base = np.zeros(model.p)
        base[fixed] = constraints.c

        def expand(phi):
            th = base.copy()
            th[free] = phi
            for i in free:
                if model.positive[i]:
                    th[i] = np.exp(phi[list(free).index(i)])
            return th

        def contract(th):
            return np.array([np.log(th[i]) if model.positive[i] else th[i] for i in free])
    else:
        theta0, N = constraints.particular(), constraints.null_basis()

        def expand(phi):
            return theta0 + N @ phi

        def contract(th):
            return N.T @ (th - theta0)

    def fun(phi):
        return objective_iid(gen, model, x, expand(phi))

    best = None
    for th0 in starts:
        th0 = np.array(th0, dtype=float)
        if fixed is not None:
            th0[fixed] = constraints.c
        try:
            phi0 = contract(th0)
            rep = minimize(fun, phi0)
        except (OptimizationError, DomainError, FloatingPointError):
            continue
        if best is None or rep.fun < best.fun - 1e-10:
            best = rep
    if best is None:
        raise OptimizationError("restricted fit failed: reparameterization undefined at every start")
    theta = expand(best.x)
    if fixed is not None:
        theta[fixed] = constraints.c
    return Estimate(theta=theta, generator=gen, model=model, n=x.size, objective=best.fun,
                    report=best, init="restricted")


def _projection(J, M):
    Ji = _inv(J)
    if M.shape[1] == 0:
        return Ji, np.zeros_like(J)
    mid = M.T @ Ji @ M
    if np.linalg.cond(mid) > 1e12:
        raise np.linalg.LinAlgError("M^T J^{-1} M is singular")
    Q = Ji @ M @ np.linalg.inv(mid)
    P = Ji - Q @ M.T @ Ji
    Bm = Ji @ M @ np.linalg.inv(mid) @ M.T @ Ji
    return P, Bm


def restricted_vcov(gen, model, theta, constraints):
    """``P K P`` with ``P = J^{-1} - Q M^T J^{-1}``, ``Q = J^{-1} M (M^T J^{-1} M)^{-1}``."""
    bundle = model_matrices(gen, model, theta)
    P, _ = _projection(bundle.J, constraints.jacobian(theta))
    cov = P @ bundle.K @ P
    return 0.5 * (cov + cov.T)


def bdts(gen2, model, theta_hat, theta_tilde, n):
    """``T = 2 n D_{B2}(f_{theta_hat}, f_{theta_tilde})`` by quadrature."""
    th, tt = model.check(theta_hat), model.check(theta_tilde)
    x, w = model.quadrature(th, tt)
    grid = DensityGrid(x, w, model.pdf(x, th), model.pdf(x, tt))
    return 2.0 * n * max(divergence(gen2, grid), 0.0)


def _a_matrix(gen2, model, theta):
    # A_ij = int B2''(f) (df/dtheta_i)(df/dtheta_j) dx with df/dtheta = u f
    th = model.check(theta)
    x, w = model.quadrature(th)
    f = model.pdf(x, th)
    keep = f > 0
    x, w, f = x[keep], w[keep], f[keep]
    df = model.score(x, th) * f[:, None]
    return (df * (w * np.asarray(b_second(gen2, f)))[:, None]).T @ df


def null_eigenvalues(gen1, gen2, model, theta, constraints, rel_tol=1e-8):
    """The ``r`` nonzero eigenvalues of ``A_{B2} (B K B)``.

    ``B = J^{-1} M (M^T J^{-1} M)^{-1} M^T J^{-1}``; ``B K B`` is symmetric
    positive semidefinite, so the spectrum is computed from the symmetric
    matrix ``S^{1/2} A S^{1/2}``.
    """
    bundle = model_matrices(gen1, model, theta)
    _, Bm = _projection(bundle.J, constraints.jacobian(theta))
    S = Bm @ bundle.K @ Bm
    A = _a_matrix(gen2, model, theta)
    vals = product_eigvals(A, S)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    nonzero = vals[np.abs(vals) > rel_tol * top] if top > 0 else vals[:0]
    if nonzero.size != constraints.r:
        raise EigenvalueCountError(f"found {nonzero.size} nonzero eigenvalues, expected {constraints.r}")
    return nonzero


def mc_pvalue(eigenvalues, statistic, reps=100_000, seed=0):
    """Share of ``sum lambda_i Z_i^2`` draws at or above ``statistic``."""
    lam = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
    if np.any(lam <= 0):
        raise ValueError("retained eigenvalues must be positive")
    if reps < 10_000:
        raise ValueError("use at least 1e4 Monte Carlo replications")
    gen = substream(seed, 0)
    total = np.zeros(int(reps))
    for lk in lam:
        total += lk * gen.standard_normal(int(reps)) ** 2
    return float(np.mean(total >= statistic))


def chi2_pvalue(eigenvalue, statistic):
    """Exact tail for a single eigenvalue: ``1 - F_{chi2_1}(T / lambda)``."""
    return float(_st.chi2.sf(statistic / eigenvalue, 1))


def ewdts_normal_mean(data, mu0, beta, gamma=None, reps=100_000, seed=0, exact=False):
    """Test ``H0: mu = mu0`` for ``N(mu, sigma^2)`` with EWD fits and statistic.

    ``gamma`` (the statistic's tuning) defaults to ``beta``. With ``exact``
    the single-eigenvalue chi-square tail replaces the Monte Carlo draw.
    """
    x = np.asarray(data, dtype=float).ravel()
    gamma = beta if gamma is None else gamma
    model = NormalLocationScale()
    gen1, gen2 = EWD(beta), EWD(gamma)
    cons = ConstraintSet.fix(2, 0, mu0)
    full = estimate_iid(gen1, model, x)
    restricted = estimate_restricted(gen1, model, x, cons)
    stat = bdts(gen2, model, full.theta, restricted.theta, x.size)
    lam = null_eigenvalues(gen1, gen2, model, restricted.theta, cons)
    p = chi2_pvalue(lam[0], stat) if exact else mc_pvalue(lam, stat, reps, seed)
    return TestResult(full.theta, restricted.theta, stat, lam, p, 0 if exact else int(reps), seed,
                      float(beta), float(gamma))


def pvalue_curve(data, mu0, betas, reps=100_000, seed=0):
    """EWD test p-values over a grid of ``beta`` (statistic tuning equal to ``beta``)."""
    return np.array([ewdts_normal_mean(data, mu0, b, reps=reps, seed=seed).pvalue for b in betas])
