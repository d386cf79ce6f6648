import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ball_points, make_model
from n3pom.core import CoefficientNet, InterceptParams, N3pomModel, eval_ccp
from n3pom.monotonicity import check_condition, project, projected, weight_bound


def loop_rhs(model):
    """Right-hand side by explicit loops in the opposite order."""
    net = model.net
    d, L = net.w1.shape
    total = 0.0
    for k in range(d):
        inner = 0.0
        for l in reversed(range(L)):
            inner += abs(net.w2[k, l] * net.w1[k, l])
        total += inner * inner
    return model.eta * net.slope_bound * total**0.5


def one_unit_model(eta=2.0, w=2.0, slope=1.0):
    intercept = InterceptParams([1.0, 7.0], 0.0, [slope * 6.0])
    net = CoefficientNet([[w]], [[0.0]], [[w]], [0.0])
    return N3pomModel(intercept, net, eta, 7.0)


class TestCheckCondition:
    def test_zero_weights(self, rng):
        m = make_model(rng)
        m.net.w2[:] = 0.0
        rep = check_condition(m)
        assert rep.rhs == 0.0 and rep.satisfied and rep.c == 1.0

    def test_zero_lhs_zero_rhs(self):
        m = one_unit_model(w=0.0, slope=0.0)
        rep = check_condition(m)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.satisfied and rep.c == 1.0

    def test_closed_form_single_unit(self):
        rep = check_condition(one_unit_model())
        assert rep.rhs == pytest.approx(2.0, abs=1e-15)
        assert rep.lhs == pytest.approx(1.0, abs=1e-15)
        assert not rep.satisfied
        assert rep.c == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("act", ["sigmoid", "tanh"])
    def test_summation_oracle(self, act, rng):
        for _ in range(50):
            m = make_model(rng, dim=3, hidden=7, activation=act)
            assert weight_bound(m) == pytest.approx(loop_rhs(m), rel=1e-12)

    def test_lhs_is_min_slope(self, rng):
        m = make_model(rng, n_knots=9)
        assert check_condition(m).lhs == m.intercept.slopes.min()

    def test_tolerance(self):
        m = one_unit_model(w=2.0, slope=2.0 - 5e-13)
        assert check_condition(m).satisfied
        m = one_unit_model(w=2.0, slope=2.0 - 1e-9)
        assert not check_condition(m).satisfied

    def test_report_json(self):
        doc = json.loads(check_condition(one_unit_model()).to_json())
        assert set(doc) == {"lhs", "rhs", "satisfied", "c"}
        assert doc["satisfied"] is False


class TestProject:
    def test_identity_when_satisfied(self, rng):
        m = make_model(rng, scale=0.01)
        assert check_condition(m).c == 1.0
        before = m.param_vector()
        project(m)
        np.testing.assert_array_equal(m.param_vector(), before)

    def test_single_unit_halves_product(self):
        m = one_unit_model()
        rep = project(m)
        assert rep.c == pytest.approx(0.5)
        assert abs(m.net.w1[0, 0] * m.net.w2[0, 0]) == pytest.approx(2.0, rel=1e-15)
        after = check_condition(m)
        assert after.rhs == pytest.approx(1.0, rel=1e-15)
        assert after.satisfied

    def test_always_satisfied_after(self, rng):
        for _ in range(100):
            m = make_model(rng, hidden=rng.integers(1, 10), scale=rng.uniform(0.1, 5.0),
                           activation=rng.choice(["sigmoid", "tanh"]))
            project(m)
            assert check_condition(m).satisfied

    def test_idempotent(self, rng):
        m = make_model(rng, scale=3.0)
        project(m)
        once = m.param_vector()
        rep = project(m)
        assert rep.c == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(m.param_vector(), once, rtol=0, atol=1e-15)

    def test_rhs_scales_by_c(self, rng):
        for _ in range(20):
            m = make_model(rng, scale=2.0)
            c = rng.uniform(0.01, 1.0)
            before = weight_bound(m)
            m.net.w1 *= np.sqrt(c)
            m.net.w2 *= np.sqrt(c)
            assert weight_bound(m) == pytest.approx(c * before, rel=1e-13)

    def test_leaves_intercept_v1_v2(self, rng):
        m = make_model(rng, scale=4.0)
        ref = m.copy()
        project(m)
        assert m.intercept.phi == ref.intercept.phi
        np.testing.assert_array_equal(m.intercept.varphi, ref.intercept.varphi)
        np.testing.assert_array_equal(m.net.v1, ref.net.v1)
        np.testing.assert_array_equal(m.net.v2, ref.net.v2)

    def test_projected_copy(self, rng):
        m = make_model(rng, scale=4.0)
        before = m.param_vector()
        p = projected(m)
        np.testing.assert_array_equal(m.param_vector(), before)
        assert p.certified_monotone


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0))
def test_projection_gives_monotone_ccp(seed, scale):
    rng = np.random.default_rng(seed)
    m = projected(make_model(rng, hidden=5, scale=scale))
    xs = ball_points(rng, 50, 2, m.eta)
    grid = np.linspace(1, 7, 301)
    ccp = eval_ccp(m, grid[:, None], xs[None, :, :])
    assert np.min(np.diff(ccp, axis=0)) >= -1e-10
