"""Discrete cumulative-logit baselines and network initialisation from them.

``fit_discrete`` maximises the interval-censored likelihood of a discrete
POM (shared coefficients) or NPOM (threshold-specific coefficients with an
adjacent-difference ridge penalty).  ``init_from_discrete`` then builds a
coefficient network whose outputs at the integer thresholds reproduce the
fitted coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .core import CoefficientNet, InterceptParams, N3pomModel, logit
from .datagen import Dataset
from .errors import ConfigError, DataError, TrainingError

MIN_INCREMENT = 1e-6


@dataclass
class DiscreteFit:
    alphas: np.ndarray  # (J-1,)
    betas: np.ndarray  # (J-1, d)
    penalty_lambda: float = 0.0
    proportional: bool = False
    loglik: float = math.nan
    iterations: int = 0
    converged: bool = False

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if self.betas.shape[0] != self.alphas.size:
            raise DataError("need one coefficient vector per threshold")

    @property
    def n_categories(self) -> int:
        return self.alphas.size + 1

    def coefficient_curve(self, u) -> np.ndarray:
        """Piecewise-linear interpolation of the betas over ``u``; shape ``(n, d)``.

        The last threshold value is extrapolated linearly to ``u = J``.
        """
        J = self.n_categories
        grid = np.arange(1, J + 1, dtype=float)
        full = extrapolate_last(self.betas)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.column_stack([np.interp(u, grid, full[:, k]) for k in range(full.shape[1])])

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "betas": self.betas.tolist(),
            "penalty_lambda": self.penalty_lambda,
            "proportional": self.proportional,
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "DiscreteFit":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"cannot read discrete fit {path}: {exc}") from exc


def extrapolate_last(rows: np.ndarray) -> np.ndarray:
    """Append ``2 r[-1] - r[-2]`` (or a copy of ``r[-1]`` for a single row)."""
    rows = np.asarray(rows, dtype=float)
    last = 2 * rows[-1] - rows[-2] if rows.shape[0] >= 2 else rows[-1]
    return np.concatenate((rows, last[None] if rows.ndim == 2 else [last]))


class _Objective:
    def __init__(self, g, x, w, J, proportional, lam):
        self.g = g.astype(int)
        self.x = x
        self.w = w
        self.J = J
        self.d = x.shape[1]
        self.proportional = proportional
        self.lam = lam
        self.m = J - 1

    def unpack(self, theta):
        m = self.m
        alphas = theta[0] + np.concatenate(([0.0], np.cumsum(np.abs(theta[1:m]))))
        if self.proportional:
            betas = np.tile(theta[m:], (m, 1))
        else:
            betas = theta[m:].reshape(m, self.d)
        return alphas, betas

    def __call__(self, theta, with_grad=True):
        m, n = self.m, self.g.size
        alphas, betas = self.unpack(theta)
        eta = alphas + self.x @ betas.T  # (n, J-1)
        cum = np.hstack((np.zeros((n, 1)), expit(eta), np.ones((n, 1))))
        rows = np.arange(n)
        p = cum[rows, self.g] - cum[rows, self.g - 1]
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            return -np.inf, None
        diffs = np.diff(betas, axis=0)
        obj = float(self.w @ np.log(p))
        if not self.proportional:
            obj -= self.lam * float(np.sum(diffs**2))
        if not with_grad:
            return obj, None

        dens = cum * (1.0 - cum)  # sigma' at eta, zero at the padded ends
        coef = np.zeros((n, m + 2))
        coef[rows, self.g] = dens[rows, self.g] / p
        coef[rows, self.g - 1] -= dens[rows, self.g - 1] / p
        d_eta = self.w[:, None] * coef[:, 1 : m + 1]  # (n, J-1)
        g_alpha = d_eta.sum(axis=0)
        tail = np.cumsum(g_alpha[::-1])[::-1]  # sum_{j >= t} g_alpha_j
        d_phi = tail[0]
        d_varphi = np.sign(theta[1:m]) * tail[1:]
        g_beta = d_eta.T @ self.x  # (J-1, d)
        if self.proportional:
            g_b = g_beta.sum(axis=0)
        else:
            pen = np.zeros_like(betas)
            pen[:-1] -= diffs
            pen[1:] += diffs
            g_b = (g_beta - 2.0 * self.lam * pen).ravel()
        return obj, np.concatenate(([d_phi], d_varphi, g_b))


def fit_discrete(
    data: Dataset,
    proportional: bool = False,
    lam: float = 0.0,
    seed: int = 0,
    max_iter: int = 50_000,
    tol: float = 1e-6,
    pseudo_count: float = 0.0,
) -> DiscreteFit:
    """Penalised maximum likelihood for the discrete cumulative-logit model.

    Responses must be integers in ``{1..J}``.  Full-batch ascent along
    BFGS-preconditioned gradient directions; a step that does not increase
    the objective is halved until it does.  Stops once the gradient sup-norm
    falls below ``tol`` or after ``max_iter`` iterations.

    An empty category has no finite MLE.  With ``pseudo_count > 0`` each empty
    category receives one observation of that weight at the covariate mean;
    otherwise it raises :class:`DataError`.  ``seed`` is accepted for
    interface symmetry; the optimiser is deterministic.
    """
    del seed
    J = int(math.floor(data.j_max))
    g = np.asarray(data.h, dtype=float)
    if np.any(g != np.round(g)) or np.any((g < 1) | (g > J)):
        raise DataError(f"discrete fit needs integer responses in 1..{J}")
    if lam < 0:
        raise ConfigError("penalty must be non-negative")
    x, w = data.x, np.ones(g.size)
    counts = np.bincount(g.astype(int), minlength=J + 1)[1:]
    empty = np.flatnonzero(counts == 0) + 1
    if empty.size:
        if pseudo_count <= 0:
            raise DataError(f"categories {empty.tolist()} have no observations")
        x = np.vstack((x, np.tile(x.mean(axis=0), (empty.size, 1))))
        g = np.concatenate((g, empty.astype(float)))
        w = np.concatenate((w, np.full(empty.size, pseudo_count)))
        counts = counts.astype(float)
        counts[empty - 1] = pseudo_count

    objective = _Objective(g, x, w, J, proportional, lam)
    m, d = J - 1, data.dim
    cdf = np.cumsum(counts)[:-1] / counts.sum()
    alpha0 = logit(np.clip(cdf, 1e-6, 1 - 1e-6))
    inc = np.maximum(np.diff(alpha0), MIN_INCREMENT)
    theta = np.concatenate(([alpha0[0]], inc, np.zeros(d if proportional else m * d)))

    obj, grad = objective(theta)
    if not np.isfinite(obj):
        raise TrainingError("initial discrete likelihood is not finite")
    # inverse-curvature estimate, refined by BFGS updates
    H = np.eye(theta.size) / max(1.0, float(np.sum(w)))
    it, converged = 0, False
    while it < max_iter:
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        direction = H @ grad
        if direction @ grad <= 0:
            H = np.eye(theta.size) / max(1.0, float(np.sum(w)))
            direction = H @ grad
        step = 1.0
        slack = 1e-12 * max(1.0, abs(obj))
        while True:
            cand = theta + step * direction
            c_obj, c_grad = objective(cand)
            if np.isfinite(c_obj) and c_obj >= obj - slack:
                break
            step *= 0.5
            if step < 1e-30:
                raise TrainingError(f"discrete fit stuck at iteration {it}")
        s, y = cand - theta, grad - c_grad
        theta, obj, grad = cand, c_obj, c_grad
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            rho = 1.0 / sy
            V = np.eye(theta.size) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        it += 1

    alphas, betas = objective.unpack(theta)
    return DiscreteFit(
        alphas, betas, lam, proportional, loglik=obj, iterations=it, converged=converged
    )


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def distill_network(betas_full: np.ndarray, hidden: int, sharpness: float = 10.0) -> CoefficientNet:
    """Sigmoid network with ``b_k(j) = betas_full[j-1, k]`` for ``j = 1..J``.

    Unit ``l <= J`` is a step of height ``w2_l`` centred at ``u = l``.
    Dropping the ``exp(-T)`` tails gives the recursion
    ``w2_j = (beta_j - v2 - sum_{l<j} w2_l) / rho(0)``; the heights here solve
    the full J x J system instead, so the tails of neighbouring units are
    accounted for and the fit at the integers is exact up to rounding.
    Units beyond ``J`` are zero.
    """
    betas_full = np.atleast_2d(np.asarray(betas_full, dtype=float))
    J, d = betas_full.shape
    if hidden < J:
        raise ConfigError(f"need at least J={J} hidden units, got {hidden}")
    v2 = betas_full.mean(axis=0)
    w1 = np.zeros((d, hidden))
    v1 = np.zeros((d, hidden))
    w2 = np.zeros((d, hidden))
    ell = np.arange(1, J + 1)
    w1[:, :J] = sharpness
    v1[:, :J] = -sharpness * ell
    # design[j, l] = rho(T (j - l)); unit lower triangular up to exp(-T) terms
    design = expit(sharpness * (ell[:, None] - ell[None, :]))
    w2[:, :J] = np.linalg.solve(design, betas_full - v2).T
    return CoefficientNet(w1, v1, w2, v2, "sigmoid")


def duplicate_units(net: CoefficientNet, active: int, copies: int) -> CoefficientNet:
    """Replicate the first ``active`` units ``copies`` times with ``w2 / copies``.

    Leaves ``b(u)`` unchanged up to rounding.
    """
    if active * copies > net.hidden:
        raise ConfigError("not enough hidden units to duplicate into")
    out = net.copy()
    for c in range(copies):
        sl = slice(c * active, (c + 1) * active)
        out.w1[:, sl] = net.w1[:, :active]
        out.v1[:, sl] = net.v1[:, :active]
        out.w2[:, sl] = net.w2[:, :active] / copies
    return out


def intercept_from_thresholds(alphas: np.ndarray, knots: np.ndarray) -> InterceptParams:
    """Linear interpolation of threshold intercepts (extended to ``J``) at the knots."""
    full = extrapolate_last(np.asarray(alphas, dtype=float))
    grid = np.arange(1, full.size + 1, dtype=float)
    vals = np.interp(knots, grid, full)
    inc = np.maximum(np.diff(vals), MIN_INCREMENT)
    return InterceptParams(knots, vals[0], inc)


def init_from_discrete(
    fit: DiscreteFit,
    hidden: int,
    knots,
    eta: float,
    sharpness: float = 10.0,
    seed: int = 0,
    noise: bool = True,
    w2_noise_scale: float = 1.0,
) -> N3pomModel:
    """Distil a discrete fit into an N3POM.

    The network is constructed in closed form, its ``J`` active units are
    duplicated ``floor(L / J)`` times, and standard normal noise is added to
    every weight that is still zero (``w2`` noise scaled by
    ``w2_noise_scale``).
    """
    J = fit.n_categories
    if hidden <= J:
        raise ConfigError(f"hidden units L={hidden} must exceed J={J}")
    knots = np.asarray(knots, dtype=float)
    net = distill_network(extrapolate_last(fit.betas), hidden, sharpness)
    net = duplicate_units(net, J, hidden // J)
    if noise:
        rng = np.random.default_rng(seed)
        for arr, scale in ((net.w1, 1.0), (net.v1, 1.0), (net.w2, w2_noise_scale)):
            zero = arr == 0.0
            arr[zero] += scale * rng.standard_normal(int(zero.sum()))
    return N3pomModel(intercept_from_thresholds(fit.alphas, knots), net, eta, float(knots[-1]))


def random_init(
    data: Dataset,
    hidden: int,
    knots,
    eta: float,
    seed: int = 0,
    scale: float = 0.1,
    activation: str = "sigmoid",
) -> N3pomModel:
    """Small normal network weights; intercept from the smoothed empirical CDF."""
    knots = np.asarray(knots, dtype=float)
    rng = np.random.default_rng(seed)
    net = CoefficientNet.random(data.dim, hidden, rng, scale, activation)
    counts = np.searchsorted(np.sort(data.h), knots, side="right")
    vals = logit((counts + 0.5) / (data.n + 1.0))
    inc = np.maximum(np.diff(vals), MIN_INCREMENT)
    return N3pomModel(InterceptParams(knots, vals[0], inc), net, eta, float(knots[-1]))
