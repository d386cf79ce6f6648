"""Hand-coded gradients of ``f_u(x)``, of its weak derivative, and of the
weighted log-likelihood, with respect to every model parameter.

A central finite-difference routine over the flat parameter vector is
provided as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    N3pomModel,
    _check_domain,
    _check_x,
    activation,
    cell_index,
)
from .errors import TrainingError

DENSITY_FLOOR = 1e-12


@dataclass
class ParamGradient:
    d_phi: float
    d_varphi: np.ndarray
    d_w1: np.ndarray
    d_v1: np.ndarray
    d_w2: np.ndarray
    d_v2: np.ndarray

    def ravel(self) -> np.ndarray:
        """Flatten in the order used by :meth:`N3pomModel.param_vector`."""
        return np.concatenate(
            (
                [self.d_phi],
                self.d_varphi,
                self.d_w1.ravel(),
                self.d_v1.ravel(),
                self.d_w2.ravel(),
                self.d_v2,
            )
        )

    @classmethod
    def from_vector(cls, g: np.ndarray, like: N3pomModel) -> "ParamGradient":
        m = like.intercept.varphi.size
        d, L = like.net.w1.shape
        dl = d * L
        o = 1 + m
        return cls(
            float(g[0]),
            g[1:o].copy(),
            g[o : o + dl].reshape(d, L).copy(),
            g[o + dl : o + 2 * dl].reshape(d, L).copy(),
            g[o + 2 * dl : o + 3 * dl].reshape(d, L).copy(),
            g[o + 3 * dl :].copy(),
        )


def clamp01(z):
    return np.clip(z, 0.0, 1.0)


class _Terms:
    """Per-sample intermediate quantities shared by all gradient formulas."""

    def __init__(self, model: N3pomModel, u, x):
        p, net = model.intercept, model.net
        self.u = _check_domain(np.atleast_1d(u), model.j_max)
        self.x = np.atleast_2d(_check_x(model, x))
        u = self.u
        self.cell = cell_index(p.knots, u)
        self.sign = np.sign(p.varphi)
        self.ramp = clamp01((u[:, None] - p.knots[:-1]) / p.widths)  # (n, R-1)

        z = net.w1 * u[:, None, None] + net.v1  # (n, d, L)
        self.rho = activation(net.activation, z)
        self.drho = activation(net.activation, z, 1)
        self.ddrho = activation(net.activation, z, 2)

        alphas = p.alphas
        a = alphas[self.cell] + p.slopes[self.cell] * (u - p.knots[self.cell])
        a = np.where(u == p.knots[-1], alphas[-1], a)
        b = net.v2 + np.sum(net.w2 * self.rho, axis=-1)
        db = np.sum(net.w1 * net.w2 * self.drho, axis=-1)
        self.f = a + np.sum(b * self.x, axis=1)
        self.fprime = p.slopes[self.cell] + np.sum(db * self.x, axis=1)


def _grad_f_batch(model, t: _Terms, weights):
    """Weighted sum over samples of grad f."""
    net = model.net
    cw = weights[:, None] * t.x  # (n, d)
    d_varphi = t.sign * (weights @ t.ramp)
    d_w2 = np.einsum("nk,nkl->kl", cw, t.rho)
    gd = np.einsum("nk,nkl->kl", cw, t.drho)
    gdu = np.einsum("nk,nkl->kl", cw * t.u[:, None], t.drho)
    return ParamGradient(
        float(np.sum(weights)),
        d_varphi,
        net.w2 * gdu,
        net.w2 * gd,
        d_w2,
        np.sum(cw, axis=0),
    )


def _grad_fprime_batch(model, t: _Terms, weights):
    """Weighted sum over samples of grad f'."""
    p, net = model.intercept, model.net
    cw = weights[:, None] * t.x
    cell_w = np.bincount(t.cell, weights=weights, minlength=p.varphi.size)
    d_varphi = t.sign * cell_w / p.widths
    dd = np.einsum("nk,nkl->kl", cw, t.ddrho)
    ddu = np.einsum("nk,nkl->kl", cw * t.u[:, None], t.ddrho)
    d1 = np.einsum("nk,nkl->kl", cw, t.drho)
    w12 = net.w1 * net.w2
    return ParamGradient(
        0.0,
        d_varphi,
        w12 * ddu + net.w2 * d1,
        w12 * dd,
        net.w1 * d1,
        np.zeros(net.dim),
    )


def grad_f(model: N3pomModel, u, x) -> ParamGradient:
    """Gradient of ``f_u(x)`` at a single point ``(u, x)``."""
    t = _Terms(model, u, x)
    return _grad_f_batch(model, t, np.ones(1))


def grad_f_deriv(model: N3pomModel, u, x) -> ParamGradient:
    """Gradient of the weak derivative ``f'_u(x)`` at a single point."""
    t = _Terms(model, u, x)
    return _grad_fprime_batch(model, t, np.ones(1))


def grad_loglik(model: N3pomModel, u, x, zeta) -> ParamGradient:
    """Gradient of ``sum_i zeta_i [log sigma'(f_i) + log f'_i]``.

    ``u`` holds the responses ``h_i`` and ``x`` the matching covariate rows.
    Densities below :data:`DENSITY_FLOOR` are floored; a strictly negative
    density raises :class:`TrainingError`.
    """
    t = _Terms(model, u, x)
    zeta = np.asarray(zeta, dtype=float)
    neg = np.flatnonzero(t.fprime < 0)
    if neg.size:
        i = int(neg[0])
        raise TrainingError(f"negative density derivative {t.fprime[i]:.3g} at sample {i}")
    # sigma''/sigma' simplifies to 1 - 2 sigma
    ratio = 1.0 - 2.0 * expit(t.f)
    g1 = _grad_f_batch(model, t, zeta * ratio)
    g2 = _grad_fprime_batch(model, t, zeta / np.maximum(t.fprime, DENSITY_FLOOR))
    return ParamGradient(
        g1.d_phi + g2.d_phi,
        g1.d_varphi + g2.d_varphi,
        g1.d_w1 + g2.d_w1,
        g1.d_v1 + g2.d_v1,
        g1.d_w2 + g2.d_w2,
        g1.d_v2 + g2.d_v2,
    )


def loglik_terms(model: N3pomModel, u, x) -> np.ndarray:
    """Per-sample ``log sigma'(f) + log max(f', floor)``."""
    t = _Terms(model, u, x)
    return log_sigmoid_deriv(t.f) + np.log(np.maximum(t.fprime, DENSITY_FLOOR))


def log_sigmoid_deriv(z):
    z = np.asarray(z, dtype=float)
    # log sigma(z) + log sigma(-z), stable for large |z|
    a = -np.abs(z)
    return a - 2.0 * np.log1p(np.exp(a))


def finite_difference(fun, model: N3pomModel, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``fun(model)`` over the flat parameter vector."""
    theta = model.param_vector()
    probe = model.copy()
    out = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += step
        probe.set_param_vector(tp)
        fp = fun(probe)
        tp[i] -= 2 * step
        probe.set_param_vector(tp)
        fm = fun(probe)
        out[i] = (fp - fm) / (2 * step)
    return out
