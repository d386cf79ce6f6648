"""Model parameters and forward evaluation of the N3POM.

The conditional cumulative probability of a continuous ordinal response
``H`` on ``[1, J]`` given covariates ``x`` is modelled as

    logit P(H <= u | x) = f_u(x) = a(u) + <b(u), x>

where ``a`` is a non-decreasing piecewise-linear intercept and each
coefficient ``b_k`` is a single-hidden-layer network of ``u``.

All evaluation functions accept either a scalar ``u`` with a single
covariate vector ``x`` of shape ``(d,)``, or paired arrays ``u`` of shape
``(n,)`` and ``x`` of shape ``(n, d)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError, DomainError

ACTIVATIONS = ("sigmoid", "tanh")

# sup |rho'(z)|
ACTIVATION_SLOPE_BOUND = {"sigmoid": 0.25, "tanh": 1.0}


def sigmoid(z):
    return expit(z)


def sigmoid_deriv(z):
    s = expit(z)
    return s * (1.0 - s)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def activation(name: str, z, order: int = 0):
    """Activation ``rho`` (order 0) and its first/second derivatives."""
    if name == "sigmoid":
        s = expit(z)
        if order == 0:
            return s
        d1 = s * (1.0 - s)
        if order == 1:
            return d1
        return d1 * (1.0 - 2.0 * s)
    if name == "tanh":
        t = np.tanh(z)
        if order == 0:
            return t
        d1 = 1.0 - t * t
        if order == 1:
            return d1
        return -2.0 * t * d1
    raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


@dataclass
class InterceptParams:
    """Knots and re-parameterised values of the piecewise-linear intercept.

    ``alpha_1 = phi`` and ``alpha_r = phi + sum_{t<=r} |varphi_t|`` so the
    knot values are non-decreasing for any parameter values.
    """

    knots: np.ndarray
    phi: float
    varphi: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.varphi = np.asarray(self.varphi, dtype=float)
        self.phi = float(self.phi)
        if self.knots.ndim != 1 or self.knots.size < 2:
            raise ConfigError("need at least two knots")
        if np.any(np.diff(self.knots) <= 0):
            raise ConfigError("knots must be strictly increasing")
        if not (np.all(np.isfinite(self.knots)) and np.isfinite(self.phi) and np.all(np.isfinite(self.varphi))):
            raise ConfigError("intercept parameters must be finite")
        if self.knots[0] != 1.0:
            raise ConfigError(f"first knot must be 1, got {self.knots[0]}")
        if self.varphi.shape != (self.knots.size - 1,):
            raise ConfigError(
                f"varphi must have length {self.knots.size - 1}, got {self.varphi.shape}"
            )

    @property
    def n_knots(self) -> int:
        return self.knots.size

    @property
    def j_max(self) -> float:
        return float(self.knots[-1])

    @property
    def alphas(self) -> np.ndarray:
        return self.phi + np.concatenate(([0.0], np.cumsum(np.abs(self.varphi))))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def slopes(self) -> np.ndarray:
        return np.abs(self.varphi) / self.widths

    def copy(self) -> "InterceptParams":
        return InterceptParams(self.knots.copy(), self.phi, self.varphi.copy())

    @classmethod
    def from_alphas(cls, knots, alphas) -> "InterceptParams":
        alphas = np.asarray(alphas, dtype=float)
        inc = np.diff(alphas)
        if np.any(inc < 0):
            raise ConfigError("knot values must be non-decreasing")
        return cls(knots, alphas[0], inc)

    @classmethod
    def regular(cls, j_max: float, n_knots: int, phi=0.0, varphi=None):
        knots = np.linspace(1.0, j_max, n_knots)
        if varphi is None:
            varphi = np.ones(n_knots - 1)
        return cls(knots, phi, varphi)


@dataclass
class CoefficientNet:
    """Per-covariate perceptrons ``b_k(u) = v2_k + sum_l w2_kl rho(w1_kl u + v1_kl)``.

    Weight arrays ``w1``, ``v1``, ``w2`` have shape ``(d, L)``; ``v2`` has
    shape ``(d,)``.
    """

    w1: np.ndarray
    v1: np.ndarray
    w2: np.ndarray
    v2: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.w1 = np.array(self.w1, dtype=float, ndmin=2)
        self.v1 = np.array(self.v1, dtype=float, ndmin=2)
        self.w2 = np.array(self.w2, dtype=float, ndmin=2)
        self.v2 = np.array(self.v2, dtype=float, ndmin=1)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}"
            )
        shape = self.w1.shape
        if self.v1.shape != shape or self.w2.shape != shape:
            raise ConfigError("w1, v1 and w2 must share shape (d, L)")
        if self.v2.shape != (shape[0],):
            raise ConfigError(f"v2 must have shape ({shape[0]},)")
        if shape[1] < 1:
            raise ConfigError("need at least one hidden unit")
        for name in ("w1", "v1", "w2", "v2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} has non-finite entries")

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def slope_bound(self) -> float:
        return ACTIVATION_SLOPE_BOUND[self.activation]

    def copy(self) -> "CoefficientNet":
        return CoefficientNet(
            self.w1.copy(), self.v1.copy(), self.w2.copy(), self.v2.copy(), self.activation
        )

    @classmethod
    def zeros(cls, dim: int, hidden: int, activation: str = "sigmoid"):
        z = np.zeros((dim, hidden))
        return cls(z, z.copy(), z.copy(), np.zeros(dim), activation)

    @classmethod
    def random(cls, dim, hidden, rng, scale=0.1, activation="sigmoid"):
        return cls(
            scale * rng.standard_normal((dim, hidden)),
            scale * rng.standard_normal((dim, hidden)),
            scale * rng.standard_normal((dim, hidden)),
            scale * rng.standard_normal(dim),
            activation,
        )


@dataclass
class N3pomModel:
    intercept: InterceptParams
    net: CoefficientNet
    eta: float
    j_max: float = field(default=None)

    def __post_init__(self):
        if self.j_max is None:
            self.j_max = self.intercept.j_max
        self.j_max = float(self.j_max)
        self.eta = float(self.eta)
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.intercept.j_max != self.j_max:
            raise ConfigError(
                f"last knot {self.intercept.j_max} does not match J={self.j_max}"
            )

    @property
    def dim(self) -> int:
        return self.net.dim

    @property
    def certified_monotone(self) -> bool:
        from .monotonicity import check_condition

        return check_condition(self).satisfied

    def copy(self) -> "N3pomModel":
        return N3pomModel(self.intercept.copy(), self.net.copy(), self.eta, self.j_max)

    # -- flat parameter vector: phi, varphi, w1, v1, w2, v2 -------------
    def param_vector(self) -> np.ndarray:
        return np.concatenate(
            (
                [self.intercept.phi],
                self.intercept.varphi,
                self.net.w1.ravel(),
                self.net.v1.ravel(),
                self.net.w2.ravel(),
                self.net.v2,
            )
        )

    def set_param_vector(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        m = self.intercept.varphi.size
        d, L = self.net.w1.shape
        dl = d * L
        if theta.size != 1 + m + 3 * dl + d:
            raise ConfigError("parameter vector has the wrong length")
        self.intercept.phi = float(theta[0])
        self.intercept.varphi = theta[1 : 1 + m].copy()
        o = 1 + m
        self.net.w1 = theta[o : o + dl].reshape(d, L).copy()
        self.net.v1 = theta[o + dl : o + 2 * dl].reshape(d, L).copy()
        self.net.w2 = theta[o + 2 * dl : o + 3 * dl].reshape(d, L).copy()
        self.net.v2 = theta[o + 3 * dl :].copy()

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "j_max": self.j_max,
            "eta": self.eta,
            "activation": self.net.activation,
            "knots": self.intercept.knots.tolist(),
            "phi": self.intercept.phi,
            "varphi": self.intercept.varphi.tolist(),
            "w1": self.net.w1.tolist(),
            "v1": self.net.v1.tolist(),
            "w2": self.net.w2.tolist(),
            "v2": self.net.v2.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "N3pomModel":
        try:
            intercept = InterceptParams(doc["knots"], doc["phi"], doc["varphi"])
            net = CoefficientNet(doc["w1"], doc["v1"], doc["w2"], doc["v2"], doc["activation"])
            return cls(intercept, net, doc["eta"], doc["j_max"])
        except KeyError as exc:
            raise DataError(f"model document is missing field {exc}") from None

    def dumps(self) -> str:
        # repr-based float formatting round-trips every double exactly
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "N3pomModel":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read model {path}: {exc}") from exc
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _check_domain(u, j_max):
    u = np.asarray(u, dtype=float)
    bad = ~((u >= 1.0) & (u <= j_max))
    if np.any(bad):
        raise DomainError(f"u={u[bad].ravel()[0]!r} is outside [1, {j_max}]")
    return u


def cell_index(knots: np.ndarray, u) -> np.ndarray:
    """Index ``r-1`` of the half-open cell ``[j_{r-1}, j_r)`` containing ``u``.

    Interior knots belong to the cell on their right; ``u = J`` belongs to the
    last cell.
    """
    idx = np.searchsorted(knots, u, side="right") - 1
    return np.clip(idx, 0, knots.size - 2)


def eval_a(p: InterceptParams, u):
    u = _check_domain(u, p.j_max)
    alphas = p.alphas
    idx = cell_index(p.knots, u)
    val = alphas[idx] + p.slopes[idx] * (u - p.knots[idx])
    # exact knot value at the right end
    val = np.where(u == p.knots[-1], alphas[-1], val)
    return val[()] if np.ndim(val) == 0 else val


def eval_a_deriv(p: InterceptParams, u):
    u = _check_domain(u, p.j_max)
    val = p.slopes[cell_index(p.knots, u)]
    return val[()] if np.ndim(val) == 0 else val


def _preact(net: CoefficientNet, u):
    u = np.asarray(u, dtype=float)
    return net.w1 * u[..., None, None] + net.v1


def eval_b(net: CoefficientNet, u):
    """Coefficient vector ``b(u)``; shape ``(d,)`` or ``(n, d)``."""
    rho = activation(net.activation, _preact(net, u))
    return net.v2 + np.sum(net.w2 * rho, axis=-1)


def eval_b_deriv(net: CoefficientNet, u):
    drho = activation(net.activation, _preact(net, u), 1)
    return np.sum(net.w1 * net.w2 * drho, axis=-1)


def _check_x(model: N3pomModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.dim,):
        raise ConfigError(f"covariates have dimension {x.shape[-1:]}, model expects {model.dim}")
    return x


def eval_f(model: N3pomModel, u, x):
    x = _check_x(model, x)
    return eval_a(model.intercept, u) + np.sum(eval_b(model.net, u) * x, axis=-1)


def eval_f_deriv(model: N3pomModel, u, x):
    """Weak derivative ``f'_u(x) = a'(u) + <b'(u), x>``."""
    x = _check_x(model, x)
    return eval_a_deriv(model.intercept, u) + np.sum(eval_b_deriv(model.net, u) * x, axis=-1)


def eval_ccp(model: N3pomModel, u, x):
    """``P(H <= u | x)``."""
    return sigmoid(eval_f(model, u, x))


def eval_cpd(model: N3pomModel, u, x):
    """Density of ``H`` at ``u``; negative only for uncertified models outside the ball."""
    return sigmoid_deriv(eval_f(model, u, x)) * eval_f_deriv(model, u, x)


def eval_marginal_effect(model: N3pomModel, u, x):
    """``d/dx P(H > u | x) = -b(u) * sigma'(-f_u(x))``."""
    f = eval_f(model, u, x)
    return -eval_b(model.net, u) * sigmoid_deriv(-f)[..., None]
