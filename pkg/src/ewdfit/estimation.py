"""Minimum Bregman divergence estimation for i.i.d. samples."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .divergence import KL, b_prime, weight
from .models import ParametricModel
from .numerics import DomainError, OptimizationError, OptimizerReport, minimize

__all__ = [
    "Estimate",
    "objective_iid",
    "data_term",
    "estimate_iid",
    "psi",
    "fit_mle",
    "mle_deleted",
    "EstimationError",
]


class EstimationError(RuntimeError):
    """A fit could not be completed; ``report`` holds optimizer diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class Estimate:
    """Result of a minimum divergence fit.

    ``asymptotics`` is filled by :mod:`ewdfit.asymptotics` on request and
    holds ``J``, ``K``, ``xi`` and the sandwich covariance of
    ``sqrt(n) (theta_hat - theta_g)``.
    """

    theta: np.ndarray
    generator: object
    model: ParametricModel
    n: int
    objective: float = np.nan
    report: OptimizerReport | None = None
    init: str = ""
    asymptotics: object = None
    candidates: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return dict(zip(self.model.param_names, map(float, self.theta)))

    def standard_errors(self):
        """Sandwich standard errors ``sqrt(diag(cov) / n)``."""
        if self.asymptotics is None:
            raise ValueError("asymptotics have not been computed for this estimate")
        return np.sqrt(np.diag(self.asymptotics.covariance) / self.n)


def _check_data(model, data):
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("data must be nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contain non-finite values")
    if not np.all(model.in_support(x)):
        raise DomainError(f"data lie outside the support of the {model.name} model")
    return x


def data_term(gen, model, data, theta):
    """``n^{-1} sum_i B'(f_theta(X_i))`` for one or a batch of parameters.

    ``theta`` has shape ``(..., p)``; the result has shape ``theta.shape[:-1]``.
    """
    th = model.check(theta)
    x = np.asarray(data, dtype=float)
    if gen.is_kl:
        lp = model.logpdf(x, th[..., None, :])
        if np.any(~np.isfinite(lp)):
            raise DomainError("model density vanishes at an observation")
        return np.mean(lp, axis=-1) + 1.0
    f = model.pdf(x, th[..., None, :])
    return np.mean(b_prime(gen, f), axis=-1)


def objective_iid(gen, model, data, theta):
    """Empirical objective ``H_n(theta)``.

    ``int (f B'(f) - B(f)) dx - n^{-1} sum B'(f(X_i))``, with the constant
    ``int B(g)`` dropped. Accepts a batch of parameter vectors.
    """
    x = _check_data(model, data)
    th = model.check(theta)
    val = model.integral_term(gen, th) - data_term(gen, model, x, th)
    return float(val) if np.ndim(val) == 0 else val


def _init_points(model, x, init):
    if init is None or init == "auto":
        pts = [("robust", model.robust_init(x))]
        try:
            pts.append(("mle", model.mle(x)))
        except ValueError:
            pass
        return pts
    if isinstance(init, str):
        if init == "robust":
            return [("robust", model.robust_init(x))]
        if init == "mle":
            return [("mle", model.mle(x))]
        raise ValueError(f"unknown init option {init!r}")
    return [("user", np.atleast_1d(np.asarray(init, dtype=float)))]


def estimate_iid(gen, model, data, init="auto", tie_tol=1e-10, **options):
    """Minimum divergence estimate of ``theta`` from an i.i.d. sample.

    Parameters
    ----------
    gen : ConvexGenerator
    model : ParametricModel
    data : array_like
    init : {"auto", "robust", "mle"} or array_like
        ``"auto"`` starts from both the robust moments and the MLE and keeps
        the root with the lower objective (ties go to the robust start).
    options
        Passed to :func:`ewdfit.numerics.minimize`.

    Returns
    -------
    Estimate
    """
    x = _check_data(model, data)
    starts = _init_points(model, x, init)

    def fun(phi):
        return objective_iid(gen, model, x, model.from_free(phi))

    best = None
    candidates = []
    failures = []
    for label, th0 in starts:
        try:
            rep = minimize(fun, model.to_free(th0), **options)
        except (OptimizationError, DomainError) as exc:
            failures.append((label, str(exc)))
            continue
        theta = model.from_free(rep.x)
        candidates.append((label, theta, rep.fun))
        if best is None or rep.fun < best[2].fun - tie_tol:
            best = (label, theta, rep)
    if best is None:
        raise EstimationError(f"all starts failed: {failures}")
    label, theta, rep = best
    if not rep.converged:
        raise EstimationError("optimizer did not converge", rep)
    return Estimate(theta=theta, generator=gen, model=model, n=x.size, objective=rep.fun,
                    report=rep, init=label, candidates=candidates)


def psi(gen, model, theta, x):
    """M-estimation function ``u(x) w(f(x)) - int u w(f) f``.

    Returns an array of shape ``(len(x), p)`` (or ``(p,)`` for scalar ``x``).
    """
    th = model.check(theta)
    nodes, wts = model.quadrature(th)
    fq = model.pdf(nodes, th)
    xi = np.sum(model.score(nodes, th) * (wts * fq * weight(gen, fq))[:, None], axis=0)
    xx = np.asarray(x, dtype=float)
    f = model.pdf(xx, th)
    return model.score(xx, th) * np.asarray(weight(gen, f))[..., None] - xi


def fit_mle(model, data, ddof=0):
    """Closed-form maximum likelihood estimate wrapped as an :class:`Estimate`.

    ``ddof=1`` gives the unbiased-variance convention for the normal scale.
    """
    x = _check_data(model, data)
    theta = model.mle(x, ddof=ddof)
    return Estimate(theta=theta, generator=KL, model=model, n=x.size, init="closed-form")


def mle_deleted(model, data, outliers, ddof=0):
    """Maximum likelihood after removing the observations at ``outliers``."""
    x = _check_data(model, data)
    idx = np.atleast_1d(np.asarray(outliers, dtype=int))
    if idx.size and (idx.min() < -x.size or idx.max() >= x.size):
        raise IndexError("outlier index out of range")
    keep = np.ones(x.size, dtype=bool)
    keep[idx] = False
    if not keep.any():
        raise ValueError("every observation was deleted")
    return fit_mle(model, x[keep], ddof=ddof)
