"""Sandwich asymptotics, influence functions and relative efficiency.

For a generator with weight ``w`` and model score ``u``:

* ``J = int u u^T w(f) f dx`` (plus a misspecification term when the data
  distribution differs from the model),
* ``xi = int u w(f) f dx``,
* ``K = int u u^T w(f)^2 f dx - xi xi^T``,

and ``sqrt(n) (theta_hat - theta)`` has covariance ``J^{-1} K J^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import weight, weight_prime

__all__ = [
    "AsymptoticsBundle",
    "SingularMatrixError",
    "model_matrices",
    "empirical_matrices",
    "influence",
    "are",
    "sandwich",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """``J`` is (numerically) singular; ``direction`` is its near-null vector."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


@dataclass
class AsymptoticsBundle:
    """``J``, ``K``, ``xi`` and ``covariance = J^{-1} K J^{-1}``."""

    J: np.ndarray
    K: np.ndarray
    xi: np.ndarray
    covariance: np.ndarray
    context: str = "model"


def _inv(j, names=None):
    vals, vecs = np.linalg.eigh(0.5 * (j + j.T))
    scale = max(np.max(np.abs(vals)), 1e-300)
    if vals[0] <= 1e-12 * scale:
        v = vecs[:, 0]
        label = ""
        if names is not None:
            label = " (mostly " + names[int(np.argmax(np.abs(v)))] + ")"
        raise SingularMatrixError(f"J is singular along {np.round(v, 6).tolist()}{label}", v)
    return np.linalg.inv(j)


def sandwich(j, k, names=None):
    """``J^{-1} K J^{-1}``, symmetrized."""
    ji = _inv(j, names)
    cov = ji @ k @ ji
    return 0.5 * (cov + cov.T)


def _model_pieces(gen, model, theta):
    th = model.check(theta)
    x, w = model.quadrature(th)
    f = model.pdf(x, th)
    u = model.score(x, th)
    wt = np.asarray(weight(gen, f))
    return th, x, w, f, u, wt


def model_matrices(gen, model, theta):
    """At-model ``J``, ``K``, ``xi`` (data distribution equal to ``f_theta``)."""
    th, x, w, f, u, wt = _model_pieces(gen, model, theta)
    base = w * f * wt
    J = (u * base[:, None]).T @ u
    xi = u.T @ base
    K = (u * (base * wt)[:, None]).T @ u - np.outer(xi, xi)
    J, K = 0.5 * (J + J.T), 0.5 * (K + K.T)
    return AsymptoticsBundle(J, K, xi, sandwich(J, K, model.param_names), "model")


def empirical_matrices(gen, model, theta, data):
    """Sandwich matrices with the empirical distribution plugged in.

    ``K_hat = (n-1)^{-1} sum (u_i w_i - xi_hat)(u_i w_i - xi_hat)^T`` with
    ``xi_hat`` the sample mean of ``u_i w_i``.

    ``J_hat = int u u^T w f dx + n^{-1} sum c(X_i) - int c f dx`` with
    ``c = I w - u u^T w'(f) f`` and ``I = -grad u``; the product
    ``w h = w'(f) f`` is used directly so no ``0/0`` arises where ``w -> 0``.
    """
    th, x, w, f, u, wt = _model_pieces(gen, model, theta)
    base = w * f * wt
    J1 = (u * base[:, None]).T @ u

    def c_matrix(pts, fp, up, wp):
        info = model.neg_score_jac(pts, th)
        wh = np.asarray(weight_prime(gen, fp)) * fp
        return info * wp[:, None, None] - (up[:, :, None] * up[:, None, :]) * wh[:, None, None]

    c_model = np.tensordot(w * f, c_matrix(x, f, u, wt), axes=(0, 0))
    xd = np.asarray(data, dtype=float).ravel()
    n = xd.size
    fd = model.pdf(xd, th)
    ud = model.score(xd, th)
    wd = np.asarray(weight(gen, fd))
    c_data = c_matrix(xd, fd, ud, wd).mean(axis=0)
    J = J1 + c_data - c_model
    scores = ud * wd[:, None]
    xi_hat = scores.mean(axis=0)
    centred = scores - xi_hat
    K = centred.T @ centred / (n - 1)
    J, K = 0.5 * (J + J.T), 0.5 * (K + K.T)
    return AsymptoticsBundle(J, K, xi_hat, sandwich(J, K, model.param_names), "empirical")


def influence(gen, model, theta, y, bundle=None):
    """Influence function ``J^{-1} [u(y) w(f(y)) - xi]`` at points ``y``."""
    th = model.check(theta)
    b = bundle if bundle is not None else model_matrices(gen, model, th)
    yy = np.asarray(y, dtype=float)
    fy = model.pdf(yy, th)
    vec = model.score(yy, th) * np.asarray(weight(gen, fy))[..., None] - b.xi
    return vec @ _inv(b.J).T


def are(gen, model, theta, component=0):
    """Asymptotic efficiency relative to the MLE for one coordinate.

    Ratio of the inverse-Fisher variance to the sandwich variance.
    """
    th = model.check(theta)
    fisher_var = np.linalg.inv(model.fisher_information(th))[component, component]
    cov = model_matrices(gen, model, th).covariance
    return float(fisher_var / cov[component, component])
