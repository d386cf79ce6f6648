import numpy as np
import pytest

from n3pom.core import CoefficientNet, InterceptParams, N3pomModel


def make_model(rng, dim=2, hidden=4, n_knots=5, j_max=7.0, activation="sigmoid", eta=1.5, scale=1.0):
    """Random model with random knot spacing and unit-scale weights."""
    inner = np.sort(rng.uniform(1.0, j_max, n_knots - 2))
    knots = np.concatenate(([1.0], inner, [j_max]))
    intercept = InterceptParams(knots, rng.normal(-3.0, 1.0), rng.uniform(0.3, 2.0, n_knots - 1))
    net = CoefficientNet.random(dim, hidden, rng, scale, activation)
    return N3pomModel(intercept, net, eta, j_max)


def ball_points(rng, n, dim, radius):
    z = rng.standard_normal((n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return radius * rng.uniform(size=(n, 1)) ** (1.0 / dim) * z


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
