"""Grid measures, divergences, and transport distances against closed forms."""

import math

import numpy as np
import pytest

from mflab.errors import (
    DimensionMismatchError,
    EmptyMeasureError,
    SupportViolationError,
    UnsupportedDimensionError,
)
from mflab.measure import (
    Axis,
    EmpiricalMeasure,
    GaussianMeasure,
    GridDensity,
    covariance_opnorm,
    gaussian_kl,
    kl_divergence,
    normalize_from_log_potential,
    sample_from_grid,
    w2_distance_1d,
)

from _oracles import gaussian_kl_1d, gaussian_w2_1d


AX = Axis(-10.0, 10.0, 2048)


def grid_gaussian_1d(mean=0.0, sd=1.0, axis=AX):
    x = axis.nodes()
    return normalize_from_log_potential(-0.5 * ((x - mean) / sd) ** 2, (axis,))


class TestNormalization:
    def test_standard_gaussian_matches_closed_form(self):
        g = grid_gaussian_1d()
        x = AX.nodes()
        exact = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        assert np.max(np.abs(g.weights - exact)) < 1e-8
        assert abs(g.mass() - 1.0) < 1e-8

    def test_constant_potential_gives_uniform(self):
        g = normalize_from_log_potential(np.zeros(AX.n), (AX,))
        np.testing.assert_allclose(g.weights, 1.0 / (AX.hi - AX.lo), rtol=1e-12)

    def test_shift_invariance(self):
        x = AX.nodes()
        g0 = normalize_from_log_potential(-0.5 * x * x, (AX,))
        g1 = normalize_from_log_potential(-0.5 * x * x + 123.4, (AX,))
        np.testing.assert_allclose(g0.weights, g1.weights, rtol=1e-12)

    def test_all_minus_inf_rejected(self):
        with pytest.raises(EmptyMeasureError):
            normalize_from_log_potential(np.full(AX.n, -np.inf), (AX,))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatchError):
            normalize_from_log_potential(np.zeros(7), (AX,))

    def test_2d_gaussian_mass_and_moments(self):
        ax = Axis(-8.0, 8.0, 256)
        g = GridDensity.gaussian((ax, ax), [0.3, -0.2],
                                 [[1.0, 0.3], [0.3, 0.7]])
        assert abs(g.mass() - 1.0) < 1e-8
        np.testing.assert_allclose(g.mean(), [0.3, -0.2], atol=1e-9)
        np.testing.assert_allclose(
            g.covariance(), [[1.0, 0.3], [0.3, 0.7]], atol=1e-8)


class TestKL:
    def test_identical_densities(self):
        g = grid_gaussian_1d()
        assert kl_divergence(g, g) == 0.0

    def test_mean_shift(self):
        m = 0.7
        p = grid_gaussian_1d(mean=m)
        q = grid_gaussian_1d()
        assert abs(kl_divergence(p, q) - m * m / 2.0) < 1e-6

    def test_variance_mismatch(self):
        s = 0.8
        p = grid_gaussian_1d(sd=s)
        q = grid_gaussian_1d()
        exact = gaussian_kl_1d(0.0, s * s, 0.0, 1.0)
        assert abs(kl_divergence(p, q) - exact) < 1e-6

    def test_nonnegative(self):
        p = grid_gaussian_1d(mean=0.1, sd=1.3)
        q = grid_gaussian_1d()
        assert kl_divergence(p, q) >= -1e-10

    def test_support_violation_counts_nodes(self):
        p = grid_gaussian_1d()
        qw = p.weights.copy()
        qw[:5] = 0.0
        with np.errstate(divide="ignore"):
            q = GridDensity((AX,), qw / np.sum(AX.quad_weights() * qw),
                            np.log(qw + 1e-320))
        with pytest.raises(SupportViolationError) as err:
            kl_divergence(p, q)
        assert err.value.n_offending == 5

    def test_grid_refinement_stability(self):
        vals_kl, vals_w2 = [], []
        for n in (2048, 4096):
            ax = Axis(-10.0, 10.0, n)
            p = grid_gaussian_1d(mean=0.5, axis=ax)
            q = grid_gaussian_1d(axis=ax)
            vals_kl.append(kl_divergence(p, q))
            vals_w2.append(w2_distance_1d(p, q))
        assert abs(vals_kl[0] - 0.125) < 1e-6
        assert abs(vals_kl[1] - vals_kl[0]) < 1e-6
        assert abs(vals_w2[1] - vals_w2[0]) < 1e-6

    def test_different_grids_rejected(self):
        p = grid_gaussian_1d()
        q = grid_gaussian_1d(axis=Axis(-10.0, 10.0, 1024))
        with pytest.raises(DimensionMismatchError):
            kl_divergence(p, q)


class TestCovarianceOpnorm:
    def test_gaussian_measure_exact(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        g = GaussianMeasure([0.0, 0.0], cov)
        got_cov, opnorm = covariance_opnorm(g)
        np.testing.assert_allclose(got_cov, cov)
        assert abs(opnorm - np.linalg.eigvalsh(cov)[-1]) < 1e-9

    def test_grid_gaussian_variance(self):
        s = 1.3
        g = grid_gaussian_1d(sd=s)
        _, opnorm = covariance_opnorm(g)
        assert abs(opnorm - s * s) < 1e-6

    def test_two_point_empirical(self):
        emp = EmpiricalMeasure(np.array([[1.0], [-1.0]]))
        _, opnorm = covariance_opnorm(emp)
        assert abs(opnorm - 1.0) < 1e-12

    def test_power_iteration_matches_eigvalsh(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            a = rng.normal(size=(2, 2))
            cov = a @ a.T + 0.05 * np.eye(2)
            g = GaussianMeasure(np.zeros(2), cov)
            _, opnorm = covariance_opnorm(g)
            assert abs(opnorm - np.linalg.eigvalsh(cov)[-1]) < 1e-8 * opnorm

    def test_negatively_correlated_leading_direction(self):
        cov = np.array([[1.0, -0.9], [-0.9, 1.0]])
        g = GaussianMeasure(np.zeros(2), cov)
        _, opnorm = covariance_opnorm(g)
        assert abs(opnorm - 1.9) < 1e-9

    def test_product_opnorm_is_max_factor_variance(self):
        ax = Axis(-8.0, 8.0, 256)
        v1, v2 = 0.5, 1.4
        g = GridDensity.gaussian((ax, ax), [0.0, 0.0], np.diag([v1, v2]))
        _, opnorm = covariance_opnorm(g)
        assert abs(opnorm - max(v1, v2)) < 1e-6


class TestW2:
    def test_identical(self):
        g = grid_gaussian_1d()
        assert w2_distance_1d(g, g) < 1e-12

    def test_translation(self):
        m = 0.9
        p = grid_gaussian_1d()
        q = grid_gaussian_1d(mean=m)
        assert abs(w2_distance_1d(p, q) - m) < 1e-6

    def test_scaling(self):
        s = 0.8
        p = grid_gaussian_1d()
        q = grid_gaussian_1d(sd=s)
        assert abs(w2_distance_1d(p, q) - abs(s - 1.0)) < 1e-6

    def test_symmetry(self):
        p = grid_gaussian_1d(mean=0.4, sd=1.2)
        q = grid_gaussian_1d()
        assert abs(w2_distance_1d(p, q) - w2_distance_1d(q, p)) < 1e-9

    def test_general_gaussian_pair(self):
        p = grid_gaussian_1d(mean=0.3, sd=0.7)
        q = grid_gaussian_1d(mean=-0.5, sd=1.1)
        exact = gaussian_w2_1d(0.3, 0.7, -0.5, 1.1)
        assert abs(w2_distance_1d(p, q) - exact) < 1e-6

    def test_talagrand_against_strongly_logconcave_reference(self):
        # KL(p || q) >= (alpha/2) W2(p, q)^2 when q is alpha-strongly
        # log-concave; here q = N(0, 1/alpha).  Translations saturate the
        # inequality, so the slack is at grid accuracy.
        for alpha, mean, sd in [(1.0, 0.5, 1.0), (2.0, 0.3, 0.6),
                                (0.5, -0.8, 1.2)]:
            q = grid_gaussian_1d(sd=1.0 / math.sqrt(alpha))
            p = grid_gaussian_1d(mean=mean, sd=sd)
            kl = kl_divergence(p, q)
            w2 = w2_distance_1d(p, q)
            assert kl >= 0.5 * alpha * w2 * w2 - 1e-6

    def test_2d_rejected(self):
        ax = Axis(-8.0, 8.0, 64)
        g = GridDensity.gaussian((ax, ax), [0.0, 0.0], np.eye(2))
        with pytest.raises(UnsupportedDimensionError):
            w2_distance_1d(g, g)


class TestSampling:
    def test_moments_and_determinism(self):
        g = grid_gaussian_1d(mean=0.4, sd=0.9)
        rng = np.random.default_rng(3)
        x = sample_from_grid(g, 200_000, rng)
        assert abs(x.mean() - 0.4) < 0.01
        assert abs(x.std() - 0.9) < 0.01
        y = sample_from_grid(g, 1000, np.random.default_rng(5))
        z = sample_from_grid(g, 1000, np.random.default_rng(5))
        np.testing.assert_array_equal(y, z)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        g = grid_gaussian_1d(mean=0.2, sd=1.1)
        csv = tmp_path / "density.csv"
        meta = tmp_path / "density.json"
        g.to_csv(csv, meta)
        back = GridDensity.from_csv(csv, meta)
        np.testing.assert_allclose(back.weights, g.weights, rtol=1e-12)
        assert back.axes == g.axes

    def test_roundtrip_2d(self, tmp_path):
        ax = Axis(-8.0, 8.0, 64)
        g = GridDensity.gaussian((ax, ax), [0.1, -0.2],
                                 [[1.0, 0.2], [0.2, 0.8]])
        csv = tmp_path / "density2d.csv"
        meta = tmp_path / "density2d.json"
        g.to_csv(csv, meta)
        back = GridDensity.from_csv(csv, meta)
        np.testing.assert_allclose(back.weights, g.weights, rtol=1e-12)
        np.testing.assert_allclose(back.mean(), g.mean(), atol=1e-12)

    def test_coverage_reported(self):
        g = grid_gaussian_1d()
        assert g.coverage_in_sd() >= 8.0


class TestGaussianKLOracle:
    def test_matches_scalar_formula(self):
        a = GaussianMeasure([0.3], [[0.8]])
        b = GaussianMeasure([-0.1], [[1.2]])
        exact = gaussian_kl_1d(0.3, 0.8, -0.1, 1.2)
        assert abs(gaussian_kl(a, b) - exact) < 1e-12

    def test_grid_kl_matches_gaussian_kl(self):
        p = grid_gaussian_1d(mean=0.3, sd=0.9)
        q = grid_gaussian_1d(mean=-0.1, sd=1.1)
        exact = gaussian_kl(GaussianMeasure([0.3], [[0.81]]),
                            GaussianMeasure([-0.1], [[1.21]]))
        assert abs(kl_divergence(p, q) - exact) < 1e-6
