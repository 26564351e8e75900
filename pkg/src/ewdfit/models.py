"""Parametric families: densities, scores, simulators and closed-form MLEs.

Parameters are numpy arrays whose last axis indexes the coordinates, so a
model can be evaluated on a batch of parameter values at once; ``x`` must
broadcast against ``theta[..., 0]``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special as _sps
from scipy import stats as _st

from .divergence import antiderivative_term
from .numerics import DomainError, IntegrationDomain, ein, em1z, gauss_legendre_panels

__all__ = [
    "ParametricModel",
    "NormalMean",
    "NormalLocationScale",
    "NormalScale",
    "ExponentialMean",
    "Poisson",
    "get_model",
    "DegenerateFitError",
]

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
# Standard-normal quadrature: panels of width 0.2 on [-16, 16], 10 nodes each.
_T_NORMAL, _W_NORMAL = gauss_legendre_panels(-16.0, 16.0, 0.2, 10)
_PHI_NORMAL = np.exp(-0.5 * _T_NORMAL ** 2 - _LOG_SQRT_2PI)
# even integrands of em1z(c phi(t)) ~ (c phi)^2 / 2 are negligible past |t| = 10
_T_HALF, _W_HALF = gauss_legendre_panels(0.0, 10.0, 0.2, 10)
_W_HALF = 2.0 * _W_HALF
_PHI_HALF = np.exp(-0.5 * _T_HALF ** 2 - _LOG_SQRT_2PI)
# Standard-exponential quadrature on [0, 60].
_T_EXP, _W_EXP = gauss_legendre_panels(0.0, 60.0, 0.2, 10)


class DegenerateFitError(ValueError):
    """Data cannot identify the parameter (e.g. zero spread)."""


def _theta(theta, p):
    th = np.asarray(theta, dtype=float)
    if th.ndim == 0:
        th = th[None]
    if th.shape[-1] != p:
        raise DomainError(f"parameter vector must have {p} coordinates")
    return th


def _data(data):
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("data must be nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contain non-finite values")
    return x


class ParametricModel:
    """Base class for a parametric family ``f_theta``.

    Subclasses provide ``pdf``, ``logpdf``, ``score`` and ``neg_score_jac``
    (the observed information ``-grad u``), a quadrature rule covering the
    support, a simulator and the closed-form MLE.
    """

    name = "model"
    p = 1
    param_names: tuple = ()
    positive: tuple = ()
    discrete = False

    # -- parameter handling -------------------------------------------------
    def check(self, theta):
        th = _theta(theta, self.p)
        for i, pos in enumerate(self.positive):
            if pos and np.any(~(th[..., i] > 0)):
                raise DomainError(f"{self.param_names[i]} must be positive")
        return th

    def to_free(self, theta):
        th = self.check(theta).copy()
        for i, pos in enumerate(self.positive):
            if pos:
                th[..., i] = np.log(th[..., i])
        return th

    def from_free(self, phi):
        th = _theta(phi, self.p).copy()
        for i, pos in enumerate(self.positive):
            if pos:
                th[..., i] = np.exp(th[..., i])
        return th

    # -- family-specific interface -----------------------------------------
    def pdf(self, x, theta):
        return np.exp(self.logpdf(x, theta))

    def logpdf(self, x, theta):
        raise NotImplementedError

    def score(self, x, theta):
        raise NotImplementedError

    def neg_score_jac(self, x, theta):
        raise NotImplementedError

    def quadrature(self, theta, *others):
        """Nodes and weights with ``sum(w * g(x)) ~ int g(x) dx``.

        Additional parameter vectors widen the rule so that it covers every
        listed density.
        """
        raise NotImplementedError

    def support(self, theta):
        raise NotImplementedError

    def simulate(self, theta, n, rng):
        raise NotImplementedError

    def mle(self, data, ddof=0):
        raise NotImplementedError

    def robust_init(self, data):
        raise NotImplementedError

    def in_support(self, data):
        return np.ones(np.shape(data), dtype=bool)

    # -- generic integrals --------------------------------------------------
    def integral_term(self, gen, theta):
        """``int (x B'(x) - B(x))|_{x=f_theta} dx`` for a batch of parameters."""
        th = self.check(theta)
        closed = self._closed_integral(gen, th)
        if closed is not None:
            return closed
        return self._quadrature_integral(gen, th)

    def _closed_integral(self, gen, th):
        if gen.is_kl:
            return np.ones(th.shape[:-1])
        return None

    def _quadrature_integral(self, gen, th):
        out = np.empty(th.shape[:-1])
        for idx in np.ndindex(out.shape):
            x, w = self.quadrature(th[idx])
            out[idx] = np.sum(w * antiderivative_term(gen, self.pdf(x, th[idx])))
        return out

    def expect(self, fn, theta):
        """``int fn(x) f_theta(x) dx`` by the model quadrature."""
        th = self.check(theta)
        x, w = self.quadrature(th)
        f = self.pdf(x, th)
        vals = np.asarray(fn(x))
        return np.tensordot(w * f, vals, axes=(0, 0))

    def fisher_information(self, theta):
        th = self.check(theta)
        x, w = self.quadrature(th)
        u = self.score(x, th)
        f = self.pdf(x, th)
        return (u * (w * f)[:, None]).T @ u


# ---------------------------------------------------------------------------
# Normal families
# ---------------------------------------------------------------------------

class _NormalBase(ParametricModel):
    def _ms(self, theta):
        raise NotImplementedError

    def logpdf(self, x, theta):
        mu, s = self._ms(np.asarray(theta, dtype=float))
        t = (np.asarray(x, dtype=float) - mu) / s
        return -0.5 * t * t - np.log(s) - _LOG_SQRT_2PI

    def quadrature(self, theta, *others):
        pars = [self._ms(self.check(theta))] + [self._ms(self.check(o)) for o in others]
        if len(pars) == 1:
            mu, s = float(pars[0][0]), float(pars[0][1])
            return mu + s * _T_NORMAL, s * _W_NORMAL
        lo = min(float(m) - 16 * float(s) for m, s in pars)
        hi = max(float(m) + 16 * float(s) for m, s in pars)
        width = 0.2 * min(float(s) for _, s in pars)
        nodes, weights = gauss_legendre_panels(lo, hi, width, 10)
        return np.asarray(nodes), np.asarray(weights)

    def support(self, theta):
        mu, s = self._ms(self.check(theta))
        return IntegrationDomain("real", center=float(mu), scale=float(s))

    def _normal_closed(self, gen, sigma):
        if gen.is_kl:
            return np.ones_like(sigma)
        if gen.family == "DPD":
            a = gen.tuning
            return (2 * np.pi) ** (-a / 2) * sigma ** (-a) * (1 + a) ** (-0.5) / (1 + a)
        if gen.family == "L2":
            return 1.0 / (2 * sigma * np.sqrt(np.pi))
        # EWD: sigma * beta * int em1z(phi(t) / (sigma beta)) dt
        b = gen.tuning
        c = 1.0 / (sigma * b)
        vals = em1z(c[..., None] * _PHI_HALF) @ _W_HALF
        return sigma * b * vals

    def _closed_integral(self, gen, th):
        _, s = self._ms(th)
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            # known scale: one evaluation serves the whole batch
            return np.full(th.shape[:-1], float(self._normal_closed(gen, s)))
        return self._normal_closed(gen, s)


class NormalLocationScale(_NormalBase):
    """``N(mu, sigma^2)`` with both parameters free."""

    name = "normal"
    p = 2
    param_names = ("mu", "sigma")
    positive = (False, True)

    def _ms(self, theta):
        return theta[..., 0], theta[..., 1]

    def score(self, x, theta):
        th = self.check(theta)
        mu, s = self._ms(th)
        t = (np.asarray(x, dtype=float) - mu) / s
        return np.stack(np.broadcast_arrays(t / s, (t * t - 1) / s), axis=-1)

    def neg_score_jac(self, x, theta):
        th = self.check(theta)
        mu, s = self._ms(th)
        t = (np.asarray(x, dtype=float) - mu) / s
        s2 = s * s
        a, b, c = np.broadcast_arrays(1 / s2, 2 * t / s2, (3 * t * t - 1) / s2)
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    def simulate(self, theta, n, rng):
        mu, s = self._ms(self.check(theta))
        return mu + s * rng.standard_normal(n)

    def mle(self, data, ddof=0):
        x = _data(data)
        if x.size - ddof < 1:
            raise DegenerateFitError("too few observations for the scale estimate")
        s = float(np.std(x, ddof=ddof))
        if not s > 0:
            raise DegenerateFitError("all observations are identical; sigma-hat = 0")
        return np.array([float(np.mean(x)), s])

    def robust_init(self, data):
        x = _data(data)
        med = float(np.median(x))
        mad = 1.4826 * float(np.median(np.abs(x - med)))
        if not mad > 0:
            mad = float(np.std(x))
        if not mad > 0:
            raise DegenerateFitError("all observations are identical; sigma is not identified")
        return np.array([med, mad])


class NormalMean(_NormalBase):
    """``N(mu, sigma^2)`` with ``sigma`` known."""

    name = "normal-mean"
    p = 1
    param_names = ("mu",)
    positive = (False,)

    def __init__(self, sigma=1.0):
        if not sigma > 0:
            raise DomainError("sigma must be positive")
        self.sigma = float(sigma)

    def _ms(self, theta):
        return theta[..., 0], self.sigma

    def score(self, x, theta):
        th = self.check(theta)
        mu = th[..., 0]
        return ((np.asarray(x, dtype=float) - mu) / self.sigma ** 2)[..., None]

    def neg_score_jac(self, x, theta):
        th = self.check(theta)
        shape = np.broadcast(np.asarray(x, dtype=float), th[..., 0]).shape
        return np.full(shape + (1, 1), 1 / self.sigma ** 2)

    def simulate(self, theta, n, rng):
        mu = float(self.check(theta)[..., 0])
        return mu + self.sigma * rng.standard_normal(n)

    def mle(self, data, ddof=0):
        return np.array([float(np.mean(_data(data)))])

    def robust_init(self, data):
        return np.array([float(np.median(_data(data)))])


class NormalScale(_NormalBase):
    """``N(mu, sigma^2)`` with ``mu`` known and ``sigma`` free."""

    name = "normal-scale"
    p = 1
    param_names = ("sigma",)
    positive = (True,)

    def __init__(self, mu=0.0):
        self.mu = float(mu)

    def _ms(self, theta):
        return self.mu, theta[..., 0]

    def score(self, x, theta):
        th = self.check(theta)
        s = th[..., 0]
        t = (np.asarray(x, dtype=float) - self.mu) / s
        return ((t * t - 1) / s)[..., None]

    def neg_score_jac(self, x, theta):
        th = self.check(theta)
        s = th[..., 0]
        t = (np.asarray(x, dtype=float) - self.mu) / s
        return ((3 * t * t - 1) / (s * s))[..., None, None]

    def simulate(self, theta, n, rng):
        s = float(self.check(theta)[..., 0])
        return self.mu + s * rng.standard_normal(n)

    def mle(self, data, ddof=0):
        x = _data(data)
        s = float(np.sqrt(np.sum((x - self.mu) ** 2) / (x.size - ddof)))
        if not s > 0:
            raise DegenerateFitError("all observations equal the known mean")
        return np.array([s])

    def robust_init(self, data):
        x = _data(data)
        s = 1.4826 * float(np.median(np.abs(x - self.mu)))
        return np.array([s if s > 0 else self.mle(x)[0]])


# ---------------------------------------------------------------------------
# Exponential
# ---------------------------------------------------------------------------

class ExponentialMean(ParametricModel):
    """Exponential distribution parameterized by its mean ``lambda``."""

    name = "exponential"
    p = 1
    param_names = ("lambda",)
    positive = (True,)

    def logpdf(self, x, theta):
        lam = self.check(theta)[..., 0]
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = -x / lam - np.log(lam)
        return np.where(x >= 0, out, -np.inf)

    def score(self, x, theta):
        lam = self.check(theta)[..., 0]
        return ((np.asarray(x, dtype=float) - lam) / lam ** 2)[..., None]

    def neg_score_jac(self, x, theta):
        lam = self.check(theta)[..., 0]
        return (2 * np.asarray(x, dtype=float) / lam ** 3 - 1 / lam ** 2)[..., None, None]

    def in_support(self, data):
        return np.asarray(data) >= 0

    def quadrature(self, theta, *others):
        lams = [float(self.check(t)[..., 0]) for t in (theta,) + others]
        if len(lams) == 1:
            return lams[0] * _T_EXP, lams[0] * _W_EXP
        nodes, weights = gauss_legendre_panels(0.0, 60 * max(lams), 0.2 * min(lams), 10)
        return np.asarray(nodes), np.asarray(weights)

    def support(self, theta):
        lam = float(self.check(theta)[..., 0])
        return IntegrationDomain("half", lower=0.0, scale=lam)

    def _closed_integral(self, gen, th):
        lam = th[..., 0]
        if gen.is_kl:
            return np.ones_like(lam)
        if gen.family == "DPD":
            a = gen.tuning
            return lam ** (-a) / (1 + a) ** 2
        if gen.family == "L2":
            return 1 / (2 * lam)
        b = gen.tuning
        return 1 - b * lam * ein(1 / (lam * b))

    def simulate(self, theta, n, rng):
        return float(self.check(theta)[..., 0]) * rng.standard_exponential(n)

    def mle(self, data, ddof=0):
        x = _data(data)
        if np.any(x < 0):
            raise DomainError("exponential data must be nonnegative")
        m = float(np.mean(x))
        if not m > 0:
            raise DegenerateFitError("all observations are zero")
        return np.array([m])

    def robust_init(self, data):
        x = _data(data)
        m = float(np.median(x)) / math.log(2)
        return np.array([m if m > 0 else self.mle(x)[0]])


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

class Poisson(ParametricModel):
    """Poisson counts with mean ``lambda``."""

    name = "poisson"
    p = 1
    param_names = ("lambda",)
    positive = (True,)
    discrete = True

    def logpdf(self, x, theta):
        lam = self.check(theta)[..., 0]
        x = np.asarray(x, dtype=float)
        return x * np.log(lam) - lam - _sps.gammaln(x + 1)

    def score(self, x, theta):
        lam = self.check(theta)[..., 0]
        return (np.asarray(x, dtype=float) / lam - 1)[..., None]

    def neg_score_jac(self, x, theta):
        lam = self.check(theta)[..., 0]
        return (np.asarray(x, dtype=float) / lam ** 2)[..., None, None]

    def in_support(self, data):
        d = np.asarray(data, dtype=float)
        return (d >= 0) & (d == np.round(d))

    @staticmethod
    def _upper(lam):
        # lam + 10 sd + 40 leaves tail mass far below 1e-13 and last pmf
        # terms below 1e-15 for every lam
        return int(math.ceil(lam + 10 * math.sqrt(lam) + 40))

    def quadrature(self, theta, *others):
        lams = [float(self.check(t)[..., 0]) for t in (theta,) + others]
        top = max(self._upper(l) for l in lams)
        ks = np.arange(top + 1, dtype=float)
        return ks, np.ones_like(ks)

    def support(self, theta):
        lam = float(self.check(theta)[..., 0])
        return IntegrationDomain("discrete", lower=0, mass=lambda k: _st.poisson.pmf(k, lam))

    def _quadrature_integral(self, gen, th):
        top = self._upper(float(np.max(th[..., 0])))
        ks = np.arange(top + 1, dtype=float)
        pmf = np.exp(self.logpdf(ks, th[..., None, :]))
        return np.sum(antiderivative_term(gen, pmf), axis=-1)

    def simulate(self, theta, n, rng):
        return rng.poisson(float(self.check(theta)[..., 0]), n).astype(float)

    def mle(self, data, ddof=0):
        x = _data(data)
        if not np.all(self.in_support(x)):
            raise DomainError("Poisson data must be nonnegative integers")
        m = float(np.mean(x))
        if not m > 0:
            raise DegenerateFitError("all counts are zero")
        return np.array([m])

    def robust_init(self, data):
        """Median, or the zero-frequency estimate ``-log(share of zeros)``
        when the median is 0."""
        x = _data(data)
        med = float(np.median(x))
        if med > 0:
            return np.array([med])
        share = np.mean(x == 0)
        if share < 1:
            return np.array([-math.log(share)])
        return np.array([0.5 / x.size])


_REGISTRY = {
    "normal": NormalLocationScale,
    "normal-location-scale": NormalLocationScale,
    "normal-mean": NormalMean,
    "normal-scale": NormalScale,
    "exponential": ExponentialMean,
    "poisson": Poisson,
}


def get_model(name, **kwargs):
    """Look up a model by name (``normal``, ``normal-mean``, ``normal-scale``,
    ``exponential``, ``poisson``)."""
    try:
        cls = _REGISTRY[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_REGISTRY)}") from None
    return cls(**kwargs)
