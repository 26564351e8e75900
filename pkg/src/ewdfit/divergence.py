"""Convex generators of the Bregman family and divergence evaluation.

Four tagged families are provided: the exponentially weighted generator
``EWD(beta)``, the density power generator ``DPD(alpha)``, Kullback-Leibler
and squared L2. Each exposes ``B`` and its first three derivatives, the
induced weight ``w(t) = B''(t) t`` and the term ``x B'(x) - B(x)`` that
enters the minimum divergence objective.

All functions accept scalars or arrays.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .numerics import EULER_GAMMA, DomainError, e1_fast, ein, em1z

__all__ = [
    "ConvexGenerator",
    "EWD",
    "DPD",
    "KL",
    "L2",
    "make_generator",
    "weight",
    "weight_prime",
    "b_value",
    "b_prime",
    "b_second",
    "b_third",
    "antiderivative_term",
    "ewd_b_closed_form",
    "ewd_b_simplified",
    "ewd_b_series",
    "DensityGrid",
    "divergence",
]

# Below this value of x/beta the EWD generator is evaluated by its series.
EWD_SERIES_SWITCH = 1e-2


@dataclass(frozen=True)
class ConvexGenerator:
    """A member of the Bregman family.

    Attributes
    ----------
    family : str
        ``"EWD"``, ``"DPD"``, ``"KL"`` or ``"L2"``.
    tuning : float
        ``beta`` for EWD, ``alpha`` for DPD, unused otherwise.

    Notes
    -----
    DPD uses ``B(x) = x^{1+alpha} / (alpha (1 + alpha))`` so that its weight
    is exactly ``t^alpha``; this differs from ``x^{1+alpha}/alpha`` by the
    factor ``1 + alpha`` only, which leaves estimators unchanged. A zero
    tuning value for EWD or DPD behaves as KL for every evaluation except
    ``b_value`` of EWD, which has no finite ``beta -> 0`` limit.
    """

    family: str
    tuning: float = 0.0

    def __post_init__(self):
        if self.family not in ("EWD", "DPD", "KL", "L2"):
            raise ValueError(f"unknown generator family {self.family!r}")
        if not np.isfinite(self.tuning) or self.tuning < 0:
            raise ValueError("tuning parameter must be finite and >= 0")

    @property
    def is_kl(self):
        return self.family == "KL" or (self.family in ("EWD", "DPD") and self.tuning == 0)

    @property
    def label(self):
        if self.family == "EWD":
            return f"E({self.tuning:g})"
        if self.family == "DPD":
            return f"D({self.tuning:g})"
        return self.family

    def weight(self, t):
        return weight(self, t)

    def weight_prime(self, t):
        return weight_prime(self, t)

    def b_value(self, x):
        return b_value(self, x)

    def b_prime(self, x):
        return b_prime(self, x)

    def b_second(self, x):
        return b_second(self, x)

    def b_third(self, x):
        return b_third(self, x)

    def antiderivative_term(self, x):
        return antiderivative_term(self, x)


def EWD(beta):
    """Exponentially weighted generator with weight ``1 - exp(-t/beta)``."""
    return ConvexGenerator("EWD", float(beta))


def DPD(alpha):
    """Density power generator with weight ``t^alpha``."""
    return ConvexGenerator("DPD", float(alpha))


KL = ConvexGenerator("KL")
L2 = ConvexGenerator("L2")


def make_generator(family, tuning=0.0):
    """Build a generator from a case-insensitive family name."""
    name = str(family).upper()
    if name in ("E", "EWD"):
        return EWD(tuning)
    if name in ("D", "DPD"):
        return DPD(tuning)
    if name in ("KL", "ML", "MLE"):
        return KL
    if name == "L2":
        return L2
    raise ValueError(f"unknown generator family {family!r}")


def _arg(x, allow_zero=False):
    x = np.asarray(x, dtype=float)
    bad = x < 0 if allow_zero else ~(x > 0)
    if np.any(bad | np.isnan(x)):
        raise DomainError("generator argument must be " + ("nonnegative" if allow_zero else "positive"))
    return x


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


def weight(gen, t):
    """Induced weight ``w(t) = B''(t) t``; ``t = 0`` returns the limit."""
    t = _arg(t, allow_zero=True)
    if gen.is_kl:
        v = np.ones_like(t)
    elif gen.family == "EWD":
        v = -np.expm1(-t / gen.tuning)
    elif gen.family == "DPD":
        v = t ** gen.tuning
    else:
        v = 2.0 * t
    return _out(v, t)


def weight_prime(gen, t):
    """``w'(t) = B''(t) + B'''(t) t``."""
    t = _arg(t, allow_zero=True)
    if gen.is_kl:
        v = np.zeros_like(t)
    elif gen.family == "EWD":
        v = np.exp(-t / gen.tuning) / gen.tuning
    elif gen.family == "DPD":
        a = gen.tuning
        with np.errstate(divide="ignore"):
            v = a * t ** (a - 1.0) if a != 1 else np.ones_like(t)
    else:
        v = np.full_like(t, 2.0)
    return _out(v, t)


def ewd_b_series(x, beta, terms=40, exact=False):
    """Series form ``(x^2/beta) sum_n (-x/beta)^n / ((n+2)! (n+1))``.

    Parameters
    ----------
    x, beta : float or array_like
    terms : int or None
        Number of terms. ``None`` sums until the terms have passed their
        peak and dropped below ``1e-22``.
    exact : bool
        Sum in exact rational arithmetic before rounding. The alternating
        terms grow to about ``e^{x/beta}`` before decaying, so floating-point
        summation loses ``~1e-16 e^{x/beta}`` absolute accuracy.
    """
    xa = np.asarray(x, dtype=float)
    if exact or terms is None:
        flat = [_series_exact(float(v), float(beta), terms) for v in np.atleast_1d(xa).ravel()]
        return _out(np.array(flat).reshape(xa.shape), x)
    z = xa / beta
    acc = np.zeros_like(z)
    for n in range(terms - 1, -1, -1):
        acc = acc * (-z) + 1.0 / (math.factorial(n + 2) * (n + 1))
    return _out(xa ** 2 / beta * acc, x)


def _series_exact(x, beta, terms):
    z = Fraction(x) / Fraction(beta)
    total = Fraction(0)
    power = Fraction(1)
    fact = 2
    n = 0
    while True:
        total += power / (fact * (n + 1))
        n += 1
        if terms is not None and n >= terms:
            break
        power *= -z
        fact *= n + 2
        if terms is None and n > 2 * z + 10 and abs(power) / fact < Fraction(1, 10**22):
            break
    return float(Fraction(x) ** 2 / Fraction(beta) * total)


def ewd_b_closed_form(x, beta):
    """Direct evaluation of
    ``-x + gamma x + beta - beta e^{-x/beta} + x E1(x/beta) + x log(x/beta)``.
    """
    x = np.asarray(x, dtype=float)
    z = x / beta
    v = -x + EULER_GAMMA * x + beta - beta * np.exp(-z) + x * e1_fast(z) + x * np.log(z)
    return _out(v, x)


def ewd_b_simplified(x, beta):
    """Generator ``-beta e^{-x/beta} + x E1(x/beta) + x log(x/beta)``.

    Differs from the full EWD generator by an affine term only, so it
    induces the same divergence.
    """
    x = np.asarray(x, dtype=float)
    z = x / beta
    return _out(-beta * np.exp(-z) + x * e1_fast(z) + x * np.log(z), x)


def b_value(gen, x):
    """Generator ``B(x)`` for ``x > 0``.

    For EWD, ``B(x) = beta [z Ein(z) - (e^{-z} - 1 + z)]`` with ``z = x/beta``,
    switching to the power series when ``z < 1e-2``.
    """
    x = _arg(x)
    if gen.family == "EWD" and gen.tuning == 0:
        raise DomainError("EWD generator value is unsupported at beta = 0; use the KL generator")
    if gen.is_kl:
        v = x * np.log(x)
    elif gen.family == "EWD":
        b = gen.tuning
        z = x / b
        small = z < EWD_SERIES_SWITCH
        v = b * (z * ein(z) - em1z(z))
        if np.any(small):
            v = np.where(small, ewd_b_series(np.where(small, x, 0.0), b, terms=8), v)
    elif gen.family == "DPD":
        a = gen.tuning
        v = x ** (1.0 + a) / (a * (1.0 + a))
    else:
        v = x * x
    return _out(v, x)


def b_prime(gen, x):
    """``B'(x)``. For EWD this is ``Ein(x/beta)``, which is 0 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    if gen.is_kl:
        x = _arg(x)
        v = np.log(x) + 1.0
    elif gen.family == "EWD":
        x = _arg(x, allow_zero=True)
        v = ein(x / gen.tuning)
    elif gen.family == "DPD":
        x = _arg(x, allow_zero=True)
        v = x ** gen.tuning / gen.tuning
    else:
        x = _arg(x, allow_zero=True)
        v = 2.0 * x
    return _out(v, x)


def b_second(gen, x):
    """``B''(x) = w(x) / x``."""
    x = _arg(x)
    if gen.is_kl:
        v = 1.0 / x
    elif gen.family == "EWD":
        v = -np.expm1(-x / gen.tuning) / x
    elif gen.family == "DPD":
        v = x ** (gen.tuning - 1.0)
    else:
        v = np.full_like(x, 2.0)
    return _out(v, x)


def b_third(gen, x):
    """``B'''(x)``; for EWD ``[e^{-x/beta}(1 + x/beta) - 1] / x^2``."""
    x = _arg(x)
    if gen.is_kl:
        v = -1.0 / (x * x)
    elif gen.family == "EWD":
        z = x / gen.tuning
        # e^{-z}(1+z) - 1 = -(z^2/2)(1 - 2z/3 + z^2/4 - ...) near zero
        small = z < 1e-3
        direct = np.exp(-z) * (1 + z) - 1.0
        series = -0.5 * z * z * (1 - 2 * z / 3 + z * z / 4)
        v = np.where(small, series, direct) / (x * x)
    elif gen.family == "DPD":
        a = gen.tuning
        v = (a - 1.0) * x ** (a - 2.0)
    else:
        v = np.zeros_like(x)
    return _out(v, x)


def antiderivative_term(gen, x):
    """``x B'(x) - B(x) = int_0^x w(s) ds`` for ``x >= 0``."""
    x = _arg(x, allow_zero=True)
    if gen.is_kl:
        v = x.copy()
    elif gen.family == "EWD":
        v = gen.tuning * em1z(x / gen.tuning)
    elif gen.family == "DPD":
        a = gen.tuning
        v = x ** (1.0 + a) / (1.0 + a)
    else:
        v = x * x
    return _out(v, x)


@dataclass
class DensityGrid:
    """Two densities evaluated on a common grid with quadrature weights.

    For discrete models ``x`` is the support and ``weights`` are ones.
    """

    x: np.ndarray
    weights: np.ndarray
    g: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if not (self.x.shape == self.weights.shape == self.g.shape == self.f.shape):
            raise ValueError("grid arrays must share one shape")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(self.g < 0) or np.any(self.f < 0):
            raise ValueError("densities must be nonnegative")


def _b_with_zero(gen, x):
    # B extended by continuity to x = 0 (B(0) = 0 for every family here).
    out = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        out[pos] = b_value(gen, x[pos])
    return out


def divergence(gen, pair):
    """Bregman divergence ``sum weights * [B(g) - B(f) - (g - f) B'(f)]``.

    Points where both densities vanish contribute nothing. A point with
    ``f = 0 < g`` is an error for KL, where ``B'(0)`` is infinite; for EWD
    and DPD ``B'`` extends continuously to 0.
    """
    g, f = pair.g, pair.f
    live = (g > 0) | (f > 0)
    g, f, wts = g[live], f[live], pair.weights[live]
    if gen.is_kl and np.any((f == 0) & (g > 0)):
        raise DomainError("model density vanishes where the data density is positive")
    if gen.family == "EWD" and gen.tuning == 0:
        gen = KL
    if gen.is_kl:
        # g log(g/f) - g + f, written to keep g = 0 points finite
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(g > 0, g * np.log(g / f), 0.0) - g + f
    else:
        term = _b_with_zero(gen, g) - _b_with_zero(gen, f) - (g - f) * b_prime(gen, f)
    return float(np.sum(wts * term))
