import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n3pom.core import sigmoid
from n3pom.datagen import (
    SETTINGS,
    SyntheticSpec,
    discretize,
    load_csv,
    make_rng,
    perturb,
    read_manifest,
    sample_covariates,
    sample_response,
    simulate,
    solve_response,
    true_coefficients,
    true_logit,
    write_synthetic_csv,
)
from n3pom.errors import ConfigError, DataError


def ks_with_atoms(sample, cdf, lo, hi):
    """Two-sided KS distance to a CDF with atoms at ``lo`` and ``hi``.

    ``cdf`` is the continuous part on ``[lo, hi)``; the true CDF is 0 below
    ``lo`` and 1 from ``hi`` on. Both one-sided limits are compared at every
    jump of the empirical CDF.
    """
    s = np.sort(sample)
    n = s.size
    vals, first = np.unique(s, return_index=True)
    upto = np.append(first[1:], n) / n
    before = first / n
    F = np.where(vals >= hi, 1.0, cdf(vals))
    F_left = np.where(vals <= lo, 0.0, cdf(np.minimum(vals, hi)))
    return max(np.max(np.abs(upto - F)), np.max(np.abs(before - F_left)))


class TestSyntheticSpec:
    def test_settings(self):
        assert SETTINGS["opposite"] == (0.05, -0.05)
        spec = SyntheticSpec.from_setting("same", n=10)
        assert (spec.m1, spec.m2, spec.n) == (0.05, 0.05, 10)

    def test_unknown_setting_lists_valid(self):
        with pytest.raises(ConfigError, match="opposite"):
            SyntheticSpec.from_setting("bogus")

    @pytest.mark.parametrize("kw", [{"n": 0}, {"j_max": 1.0}, {"covariate_law": "normal"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SyntheticSpec(**kw)

    def test_truth(self):
        np.testing.assert_allclose(true_coefficients(2.0, 0.05, -0.05), [-0.8, 0.8])
        assert true_logit(3.0, [0.5, 0.5], 0.0, 0.0) == pytest.approx(-3.0)


class TestCovariates:
    def test_disk(self):
        x = sample_covariates(SyntheticSpec(n=5000, seed=1))
        assert x.shape == (5000, 2)
        assert np.all(np.linalg.norm(x, axis=1) <= 1.0)

    def test_beta(self):
        x = sample_covariates(SyntheticSpec(n=5000, covariate_law="beta_half", seed=1))
        assert np.all((x > 0) & (x < 1))

    def test_radius_mean(self):
        x = sample_covariates(SyntheticSpec(n=100_000, seed=2))
        r = np.linalg.norm(x, axis=1)
        # r ~ U[0, 1]: mean 1/2, sd sqrt(1/12)
        assert abs(r.mean() - 0.5) < 3 * np.sqrt(1 / 12) / np.sqrt(r.size)

    def test_angle_uniform(self):
        x = sample_covariates(SyntheticSpec(n=100_000, seed=3))
        theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
        counts = np.histogram(theta, bins=8, range=(0, 2 * np.pi))[0]
        expect = x.shape[0] / 8
        assert np.sum((counts - expect) ** 2 / expect) < 24.3  # chi2(7) 0.999 quantile


class TestSampleResponse:
    def test_constant_b_median(self):
        h = sample_response(np.zeros((1, 2)), 0.0, 0.0, 7.0, None, uniforms=np.array([0.5]))
        assert h[0] == pytest.approx(4.5, abs=1e-9)

    def test_clamp_to_j(self):
        h = sample_response(np.zeros((1, 2)), 0.0, 0.0, 7.0, None, uniforms=np.array([1 - 1e-9]))
        assert h[0] == 7.0

    def test_clamp_to_one(self):
        h = sample_response(np.zeros((1, 2)), 0.0, 0.0, 7.0, None, uniforms=np.array([1e-9]))
        assert h[0] == 1.0

    def test_non_monotone_tail_settled_by_clamp(self):
        # x1 < x2 makes f_* turn down beyond J; the draw must still clamp to J
        x = np.array([[-0.7, 0.7]])
        h = sample_response(x, 0.05, -0.05, 7.0, None, uniforms=np.array([1 - 1e-12]))
        assert h[0] == 7.0

    def test_root_solves_equation(self, rng):
        x = sample_covariates(SyntheticSpec(n=200, seed=4))
        u = rng.uniform(0.05, 0.95, 200)
        h = sample_response(x, 0.05, -0.05, 7.0, None, uniforms=u)
        inner = (h > 1) & (h < 7)
        np.testing.assert_allclose(sigmoid(true_logit(h[inner], x[inner], 0.05, -0.05)), u[inner], atol=1e-9)

    def test_ks_against_model_cdf(self):
        x = np.array([0.3, -0.2])
        rng = make_rng(11)
        h = sample_response(np.tile(x, (10_000, 1)), 0.05, -0.05, 7.0, rng)
        d = ks_with_atoms(h, lambda u: sigmoid(true_logit(u, x, 0.05, -0.05)), 1.0, 7.0)
        assert d < 1.63 / np.sqrt(10_000)

    def test_monotone_in_uniform(self, rng):
        x = np.tile([0.2, 0.4], (50, 1))
        u = np.sort(rng.uniform(size=50))
        h = sample_response(x, 0.05, -0.05, 7.0, None, uniforms=u)
        assert np.all(np.diff(h) >= 0)

    def test_solver_monotone_before_clamp(self, rng):
        x = np.tile([0.1, -0.3], (40, 1))
        t = np.sort(rng.uniform(-12, 6, 40))
        h = solve_response(t, x, 0.05, -0.05, 7.0)
        assert np.all(np.diff(h) > 0)

    def test_bracket_failure_raises(self):
        # target above the global maximum of f_*: no root exists
        with pytest.raises(ArithmeticError):
            solve_response(np.array([1e6]), np.array([[-0.7, 0.7]]), 0.05, -0.05, 7.0)

    def test_truncation_rare(self):
        d = simulate(SyntheticSpec(n=100_000, seed=5))
        assert np.mean((d.h == 1.0) | (d.h == 7.0)) < 0.02


class TestDiscretize:
    @pytest.mark.parametrize(
        "h, g", [(3.4, 3), (3.6, 4), (1.0, 1), (7.0, 7), (3.5, 4), (1.49, 1), (6.5, 7)]
    )
    def test_values(self, h, g):
        assert discretize(h, 7.0) == g

    def test_stays_in_range(self):
        assert discretize(np.array([0.2, 9.9]), 7.0).tolist() == [1.0, 7.0]


class TestPerturb:
    def test_lower_clamp(self):
        class Fixed:
            def uniform(self, lo, hi, shape):
                return np.full(shape, lo)

        assert perturb(np.array([1.0]), 7.0, Fixed())[0] == 1.0

    def test_window(self, rng):
        g = rng.integers(1, 8, 10_000).astype(float)
        out = perturb(g, 7.0, rng)
        assert np.all(out >= np.maximum(g - 0.5, 1.0)) and np.all(out <= np.minimum(g + 0.5, 7.0))

    def test_unbiased_interior(self):
        out = perturb(np.full(100_000, 4.0), 7.0, make_rng(8))
        se = np.sqrt(1 / 12) / np.sqrt(out.size)
        assert abs(out.mean() - 4.0) < 3 * se

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_discretize_perturb_round_trip(self, g, seed):
        out = perturb(np.full(200, float(g)), 7.0, np.random.default_rng(seed))
        inner = np.abs(out - g) < 0.5
        assert np.all(discretize(out[inner], 7.0) == g)


class TestSimulate:
    def test_deterministic(self):
        a, b = simulate(SyntheticSpec(n=50, seed=9)), simulate(SyntheticSpec(n=50, seed=9))
        np.testing.assert_array_equal(a.h_perturbed, b.h_perturbed)
        np.testing.assert_array_equal(a.x, b.x)

    def test_variants_consistent(self):
        d = simulate(SyntheticSpec(n=500, seed=1))
        np.testing.assert_array_equal(d.h_rounded, discretize(d.h, 7.0))
        assert np.all(np.abs(d.h_perturbed - d.h_rounded) <= 0.5)
        assert np.all((d.h >= 1) & (d.h <= 7))
        assert d.dataset("rounded").h is d.h_rounded


class TestCsv:
    def test_synthetic_round_trip(self, tmp_path):
        d = simulate(SyntheticSpec(n=30, seed=2))
        write_synthetic_csv(d, tmp_path / "d.csv", tmp_path / "m.json")
        ds = load_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(ds.x, d.x)
        np.testing.assert_array_equal(ds.h, d.h)
        assert ds.names == ["x1", "x2"]
        assert read_manifest(tmp_path / "m.json") == d.spec
        rounded = load_csv(tmp_path / "d.csv", response_column="h_rounded")
        np.testing.assert_array_equal(rounded.h, d.h_rounded)
        assert rounded.dim == 2

    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            write_synthetic_csv(simulate(SyntheticSpec(n=10, seed=1)), tmp_path / f"{name}.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_rescale_identity(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("x1,y\n0.1,1\n0.2,10\n0.3,5.5\n")
        ds = load_csv(p, response_column="y", rescale=True)
        assert ds.rescale == (0.0, 1.0)
        np.testing.assert_array_equal(ds.h, [1.0, 10.0, 5.5])

    def test_rescale_inverse(self, tmp_path, rng):
        raw = rng.normal(50, 20, 40)
        p = tmp_path / "r.csv"
        p.write_text("x1,y\n" + "\n".join(f"{float(rng.normal())!r},{float(v)!r}" for v in raw) + "\n")
        ds = load_csv(p, response_column="y", rescale=True)
        assert ds.h.min() == 1.0 and ds.h.max() == pytest.approx(10.0, abs=1e-12)
        np.testing.assert_allclose(ds.raw_response(), raw, rtol=0, atol=1e-12)

    def test_standardize(self, tmp_path, rng):
        p = tmp_path / "s.csv"
        rows = "\n".join(f"{float(a)!r},{float(b)!r},2" for a, b in rng.normal(3, 2, (20, 2)))
        p.write_text("x1,x2,h\n" + rows + "\n")
        ds = load_csv(p, standardize=True)
        np.testing.assert_allclose(ds.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(ds.x.std(axis=0, ddof=1), 1.0, rtol=1e-12)
        assert len(ds.standardize) == 2

    def test_constant_covariate_named(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("age,h\n5,1\n5,2\n5,3\n")
        with pytest.raises(DataError, match="'age'"):
            load_csv(p, standardize=True)

    def test_non_numeric_cell_location(self, tmp_path):
        p = tmp_path / "n.csv"
        p.write_text("x1,h\n0.1,2\nabc,3\n")
        with pytest.raises(DataError, match=r"row 3.*'x1'"):
            load_csv(p)

    def test_missing_response_column(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("x1,y\n0.1,2\n")
        with pytest.raises(DataError, match="'h'"):
            load_csv(p)

    def test_constant_response_rescale(self, tmp_path):
        p = tmp_path / "k.csv"
        p.write_text("x1,h\n0.1,2\n0.2,2\n")
        with pytest.raises(DataError, match="constant"):
            load_csv(p, rescale=True)

    def test_out_of_range_without_rescale(self, tmp_path):
        p = tmp_path / "o.csv"
        p.write_text("x1,h\n0.1,0.5\n")
        with pytest.raises(DataError, match="outside"):
            load_csv(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("x1,h\n0.1,2\n0.2\n")
        with pytest.raises(DataError, match="row 3"):
            load_csv(p)
