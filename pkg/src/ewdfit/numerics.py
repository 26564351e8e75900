"""Numerical substrate shared by every other module.

Special functions (the exponential integral and its entire companion
``Ein``), quadrature over the integration domains used by the models,
an unconstrained minimizer, a symmetric-similarity eigensolver and seeded
random streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo
from scipy import special as _sps

__all__ = [
    "EULER_GAMMA",
    "DomainError",
    "IntegrationError",
    "OptimizationError",
    "exp_integral_e1",
    "e1_fast",
    "ein",
    "em1z",
    "IntegrationDomain",
    "integrate",
    "gauss_legendre_panels",
    "OptimizerReport",
    "minimize",
    "numerical_gradient",
    "sym_eigvals",
    "product_eigvals",
    "rng",
    "substream",
]

# Euler-Mascheroni constant, 20 significant digits.
EULER_GAMMA = 0.57721566490153286061


class DomainError(ValueError):
    """Argument outside the domain of a function or model."""


class IntegrationError(RuntimeError):
    """Quadrature failed to converge; ``estimate`` carries the best value."""

    def __init__(self, message, estimate=np.nan):
        super().__init__(message)
        self.estimate = estimate


class OptimizationError(RuntimeError):
    """Minimization failed after all restarts."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Exponential integral
# ---------------------------------------------------------------------------

def _e1_series(z):
    # E1(z) = -gamma - ln z - sum_{k>=1} (-z)^k / (k k!)
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(1, 80):
        term = term * (-z) / k
        contrib = term / k
        total += contrib
        if np.all(np.abs(contrib) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return -EULER_GAMMA - np.log(z) - total


def _e1_continued_fraction(z):
    # Modified Lentz evaluation of e^{-z} / (z + 1/(1 + 1/(z + 2/(1 + ...))))
    # in the even form b_k = z + 2k - 1, a_k = -(k-1)^2.
    tiny = 1e-300
    b = z + 1.0
    c = np.full_like(z, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, 500):
        a = -float(i * i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return h * np.exp(-z)


def exp_integral_e1(z):
    """Exponential integral ``E1(z) = Gamma(0, z)`` for ``z > 0``.

    Power series below 1, continued fraction at and above 1. Relative
    error is near machine precision on both branches.

    Parameters
    ----------
    z : float or array_like
        Positive argument(s).

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("E1(z) requires z > 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    lo = flat < 1.0
    if np.any(lo):
        out[lo] = _e1_series(flat[lo])
    if np.any(~lo):
        out[~lo] = _e1_continued_fraction(flat[~lo])
    out = out.reshape(np.shape(arr))
    return float(out) if np.ndim(arr) == 0 else out


def e1_fast(z):
    """Vectorized ``E1`` backed by ``scipy.special.exp1`` for hot loops."""
    return _sps.exp1(z)


# Taylor coefficients of Ein(z) = sum_{k>=1} (-1)^{k+1} z^k / (k k!)
_EIN_COEF = np.array([(-1.0) ** (k + 1) / (k * _sps.factorial(k)) for k in range(1, 31)])
# below this the alternating series loses under one digit to cancellation
_EIN_SWITCH = 4.0


def ein(z):
    """Entire exponential integral ``Ein(z) = gamma + ln z + E1(z)``.

    ``Ein(0) = 0`` and ``Ein'(z) = (1 - e^{-z}) / z``. The 30-term Taylor
    series is used below 4 (it is exact near zero, where the closed form
    cancels, and cheaper than ``E1``); above 40, ``E1(z) < 1e-19`` is
    dropped.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < _EIN_SWITCH
    large = z > 40.0
    mid = ~(small | large)
    if small.any():
        zs = z[small]
        acc = np.zeros_like(zs)
        for c in _EIN_COEF[::-1]:
            acc = (acc + c) * zs
        out[small] = acc
    if mid.any():
        zm = z[mid]
        out[mid] = EULER_GAMMA + np.log(zm) + _sps.exp1(zm)
    if large.any():
        out[large] = EULER_GAMMA + np.log(z[large])
    return out if out.ndim else out[()]


# Taylor coefficients 1/(k+2)! of (e^{-z} - 1 + z)/z^2 in powers of -z
_EM1Z_COEF = tuple(1.0 / math.factorial(k + 2) for k in range(14))


def em1z(z):
    """``e^{-z} - 1 + z`` without cancellation near zero."""
    z = np.asarray(z, dtype=float)
    out = np.array(np.expm1(-z))
    out += z
    small = np.abs(z) < 0.1
    if small.any():
        zs = z[small]
        acc = np.zeros_like(zs)
        for c in _EM1Z_COEF[::-1]:
            acc = acc * (-zs) + c
        out[small] = zs * zs * acc
    return out if out.ndim else out[()]


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegrationDomain:
    """Where an integral lives.

    ``kind`` is one of ``"real"``, ``"half"`` (``[lower, inf)``),
    ``"interval"`` or ``"discrete"``. For discrete domains ``support_start``
    is the first support point and ``tail_mass`` bounds the mass left out
    when the sum is truncated; ``mass`` returns the probability of a point.
    """

    kind: str = "real"
    lower: float = -np.inf
    upper: float = np.inf
    center: float = 0.0
    scale: float = 1.0
    tail_mass: float = 1e-12
    mass: Callable | None = field(default=None, compare=False)
    max_points: int = 10_000_000

    def __post_init__(self):
        if self.kind not in ("real", "half", "interval", "discrete"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (0 < self.tail_mass <= 1e-8):
            raise ValueError("tail mass bound must lie in (0, 1e-8]")
        if self.kind == "interval" and not self.lower < self.upper:
            raise ValueError("finite interval needs lower < upper")


def integrate(fn, domain, tol=1e-10):
    """Integrate ``fn`` over ``domain``.

    Continuous domains use adaptive Gauss-Kronrod (QUADPACK), whose error
    estimate compares the nested 7- and 15-point rules; the real line is
    split at ``center`` and mapped through ``center + scale * t``. Discrete
    domains are summed until the cumulative model mass reaches
    ``1 - tail_mass`` and the last term is negligible.
    """
    if domain.kind == "discrete":
        return _sum_discrete(fn, domain, tol)
    if domain.kind == "real":
        c, s = domain.center, domain.scale
        g = lambda t: s * fn(c + s * t)
        parts = [_quad(g, -np.inf, 0.0, tol), _quad(g, 0.0, np.inf, tol)]
        return parts[0] + parts[1]
    if domain.kind == "half":
        s = domain.scale
        g = lambda t: s * fn(domain.lower + s * t)
        return _quad(g, 0.0, np.inf, tol)
    return _quad(fn, domain.lower, domain.upper, tol)


def _quad(g, a, b, tol):
    out = _spi.quad(g, a, b, epsabs=tol, epsrel=tol, limit=500, full_output=1)
    val, err = out[0], out[1]
    if len(out) > 3 and err > max(10 * tol, 1e-12) * max(1.0, abs(val)):
        raise IntegrationError(f"quadrature did not converge (error estimate {err:.3g})", val)
    return val


def _sum_discrete(fn, domain, tol):
    if domain.mass is None:
        raise ValueError("discrete domain needs a mass function")
    k0 = int(domain.lower) if np.isfinite(domain.lower) else 0
    total, cum = 0.0, 0.0
    block = 256
    k = k0
    while k - k0 < domain.max_points:
        ks = np.arange(k, k + block, dtype=float)
        vals = np.asarray(fn(ks), dtype=float)
        total += float(np.sum(vals))
        cum += float(np.sum(domain.mass(ks)))
        k += block
        if cum >= 1.0 - domain.tail_mass and abs(vals[-1]) < 1e-14:
            return total
    raise IntegrationError("discrete sum did not reach the tail-mass bound", total)


_GL_CACHE: dict = {}


def gauss_legendre_panels(lower, upper, width, order=10):
    """Composite Gauss-Legendre nodes and weights on ``[lower, upper]``.

    Panels are at most ``width`` wide with ``order`` nodes each, so the rule
    integrates polynomials of degree ``2 * order - 1`` exactly per panel.
    """
    key = (float(lower), float(upper), float(width), int(order))
    hit = _GL_CACHE.get(key)
    if hit is not None:
        return hit
    npan = max(1, int(np.ceil((upper - lower) / width - 1e-9)))
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lower, upper, npan + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    weights = (half[:, None] * w0[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    if len(_GL_CACHE) < 256:
        _GL_CACHE[key] = (nodes, weights)
    return nodes, weights


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

@dataclass
class OptimizerReport:
    """Outcome of :func:`minimize`."""

    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    restarts: int = 0
    message: str = ""


def numerical_gradient(fun, x, rel_step=1e-6):
    """Central-difference gradient with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def minimize(objective, init, xtol=1e-10, gtol=1e-8, max_simplex=500, max_polish=200,
             restarts=3, seed=0, simplex_scale=None, simplex_tol=1e-5):
    """Local minimization: Nelder-Mead simplex, then a BFGS polish.

    The simplex stops at parameter spread ``simplex_tol``; the polish uses
    central-difference gradients and stops at gradient norm ``gtol`` or
    relative step ``xtol``. Non-finite objective values are treated as
    ``+inf`` so the simplex retreats from them. When the first pass fails to converge the search
    is restarted from seeded perturbations of the best point so far.

    Returns
    -------
    OptimizerReport
    """
    x0 = np.atleast_1d(np.asarray(init, dtype=float))

    def safe(x):
        try:
            v = float(objective(x))
        except (DomainError, FloatingPointError, ZeroDivisionError, OverflowError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    f0 = safe(x0)
    if not np.isfinite(f0):
        raise OptimizationError("objective is not finite at the initial point")

    gen = np.random.default_rng(seed)
    best_x, best_f = x0, f0
    iters = 0
    report = None
    for attempt in range(restarts + 1):
        start = best_x if attempt == 0 else best_x + 0.1 * (1 + np.abs(best_x)) * gen.standard_normal(best_x.size)
        options = {"maxiter": max_simplex, "xatol": simplex_tol, "fatol": 1e-13, "adaptive": best_x.size > 2}
        if simplex_scale is not None:
            step = np.asarray(simplex_scale, dtype=float) * np.ones(start.size)
            options["initial_simplex"] = np.vstack([start, start + np.diag(step)])
        nm = _spo.minimize(safe, start, method="Nelder-Mead", options=options)
        iters += int(nm.nit)
        x, f = nm.x, float(nm.fun)
        if f <= best_f:
            best_x, best_f = x, f
        polished = _polish(safe, best_x, gtol, xtol, max_polish)
        iters += polished[2]
        if polished[1] <= best_f:
            best_x, best_f = polished[0], polished[1]
        best_x, best_f, gnorm = _newton_refine(safe, best_x, best_f)
        converged = (gnorm <= max(gtol, 1e-6 * (1 + abs(best_f)))) or nm.success and _flat(safe, best_x, best_f)
        report = OptimizerReport(best_x.copy(), best_f, gnorm, iters, bool(converged), attempt)
        if converged:
            return report
    report.message = "no convergence after restarts"
    return report


def _polish(safe, x, gtol, xtol, max_iter):
    def grad(z):
        return numerical_gradient(safe, z)

    try:
        res = _spo.minimize(safe, x, jac=grad, method="BFGS", options={"gtol": gtol, "xrtol": xtol, "maxiter": max_iter})
    except (ValueError, FloatingPointError):
        return x, safe(x), 0
    if not np.isfinite(res.fun):
        return x, safe(x), int(res.nit)
    return res.x, float(res.fun), int(res.nit)


def _fd_hessian(safe, x, rel_step=1e-4):
    p = x.size
    h = rel_step * (1.0 + np.abs(x))
    f0 = safe(x)
    H = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[i, i] = (safe(x + ei) - 2 * f0 + safe(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(p)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (safe(x + ei + ej) - safe(x + ei - ej) - safe(x - ei + ej)
                                 + safe(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def _newton_refine(safe, x, f, steps=3):
    # Newton steps on a finite-difference Hessian, kept only while they shrink
    # the gradient; BFGS with difference gradients stalls near 1e-7 in x.
    g = numerical_gradient(safe, x)
    if not np.all(np.isfinite(g)):
        return x, f, np.inf
    gnorm = float(np.linalg.norm(g))
    if x.size > 10:
        return x, f, gnorm
    for _ in range(steps):
        H = _fd_hessian(safe, x)
        if not np.all(np.isfinite(H)):
            break
        try:
            if np.min(np.linalg.eigvalsh(0.5 * (H + H.T))) <= 0:
                break
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        xn = x - step
        fn = safe(xn)
        gn = numerical_gradient(safe, xn)
        if not (np.isfinite(fn) and np.all(np.isfinite(gn))):
            break
        nn = float(np.linalg.norm(gn))
        if nn >= gnorm or fn > f + 1e-12 * (1 + abs(f)):
            break
        x, f, g, gnorm = xn, fn, gn, nn
    return x, f, gnorm


def _grad_norm(safe, x):
    g = numerical_gradient(safe, x)
    return float(np.linalg.norm(g)) if np.all(np.isfinite(g)) else np.inf


def _flat(safe, x, f):
    # Simplex collapsed on a plateau: every probe returns the same value.
    h = 1e-6 * (1 + np.abs(x))
    probes = [safe(x + d) for d in np.diag(h)] + [safe(x - d) for d in np.diag(h)]
    return all(abs(p - f) <= 1e-12 * (1 + abs(f)) for p in probes)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def sym_eigvals(matrix, symmetrize=True):
    """Eigenvalues of a square matrix in descending order.

    With ``symmetrize`` the symmetric part ``(A + A^T)/2`` is decomposed,
    which is exact for symmetric input.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if symmetrize:
        vals = np.linalg.eigvalsh(0.5 * (a + a.T))
    else:
        vals = np.real(np.linalg.eigvals(a))
    return np.sort(vals)[::-1]


def _psd_sqrt(s):
    vals, vecs = np.linalg.eigh(0.5 * (s + s.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def product_eigvals(a, s):
    """Eigenvalues of ``A @ S`` for symmetric ``A`` and symmetric PSD ``S``.

    ``A S`` is similar to ``S^{1/2} A S^{1/2}`` on the range of ``S``, so the
    spectrum comes from a symmetric problem.
    """
    root = _psd_sqrt(np.atleast_2d(np.asarray(s, dtype=float)))
    return sym_eigvals(root @ np.atleast_2d(a) @ root)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def rng(seed):
    """Reproducible generator from a 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))


def substream(seed, *key):
    """Independent generator for a replication index (or any integer key)."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
