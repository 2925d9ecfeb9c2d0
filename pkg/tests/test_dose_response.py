from fractions import Fraction

import numpy as np
import pytest

from koow.dose_response import (CurveEstimate, evaluate_parametric, tricube,
                                weighted_local_poly, weighted_polyfit)
from koow.errors import InputError, InvalidSpan, RankDeficient
from koow.simulation import TRUE_COEFFICIENTS, generate, scenario

GRID = np.linspace(-3, 3, 61)


class TestPolyfit:
    def test_hand_example(self):
        # exact weighted least squares: weighted means 5/4 and 1/4, slope -1/11
        coef = weighted_polyfit([0.0, 1.0, 2.0], [0.0, 1.0, 0.0], [1.0, 1.0, 2.0], 1)
        np.testing.assert_allclose(coef, [4 / 11, -1 / 11], rtol=1e-12)

    def test_uniform_weights_is_ols(self, rng):
        A, Y = rng.normal(size=50), rng.normal(size=50)
        V = np.vander(A, 4, increasing=True)
        ols = np.linalg.solve(V.T @ V, V.T @ Y)
        np.testing.assert_allclose(weighted_polyfit(A, Y, np.ones(50), 3), ols, rtol=1e-10)

    def test_noiseless_recovery(self):
        ds, beta = generate(scenario("linear", n=500), 1)
        w = np.random.default_rng(0).uniform(0.1, 2.0, 500)
        np.testing.assert_allclose(weighted_polyfit(ds.A, true(ds.A), w, 3), beta, atol=1e-9)

    def test_weight_scale_invariance(self, rng):
        A, Y, w = rng.normal(size=30), rng.normal(size=30), rng.uniform(0, 2, 30)
        np.testing.assert_allclose(weighted_polyfit(A, Y, 1e3 * w, 2),
                                   weighted_polyfit(A, Y, w, 2), rtol=1e-10)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            weighted_polyfit([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [1.0, 1.0, 0.0], 2)

    def test_bad_weights(self):
        with pytest.raises(InputError):
            weighted_polyfit([0.0, 1.0], [1.0, 2.0], [-1.0, 2.0], 1)
        with pytest.raises(InputError):
            weighted_polyfit([0.0, 1.0], [1.0, 2.0], [1.0], 1)


def true(a):
    return 0.75 * a + 0.05 * a ** 2 + 0.01 * a ** 3


class TestParametric:
    def test_examples(self):
        assert evaluate_parametric([0, 0, 0, 0], GRID).theta_hat.max() == 0
        np.testing.assert_array_equal(evaluate_parametric([1, 0, 0, 0], GRID).theta_hat, 1.0)
        assert evaluate_parametric(TRUE_COEFFICIENTS, [2.0]).theta_hat[0] == pytest.approx(1.78)


class TestLocal:
    def test_tricube(self):
        np.testing.assert_allclose(tricube([0.0, 0.5, 1.0, -2.0]), [1.0, (7 / 8) ** 3, 0, 0])

    def test_hand_weighted_mean(self):
        A = np.array([0.0, 1.0, 2.0, 3.5, 5.0])
        Y = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        w = np.array([1.0, 2.0, 1.0, 1.0, 1.0])
        # ceil(0.6 * 5) = 3rd nearest to a0 = 2 is at distance 1.5,
        # so only A = 1 (u = -2/3) and A = 2 (u = 0) get tricube mass
        k1 = (1 - Fraction(2, 3) ** 3) ** 3
        expect = (2 * k1 * 3 + 1 * 2) / (2 * k1 + 1)
        est = weighted_local_poly(A, Y, w, 0, 0.6, [2.0])
        assert est.theta_hat[0] == pytest.approx(float(expect), rel=1e-14)

    @pytest.mark.parametrize("span", [0.3, 0.75, 1.0])
    @pytest.mark.parametrize("degree", [1, 2])
    def test_reproduces_linear(self, rng, span, degree):
        A = rng.normal(size=200)
        w = rng.uniform(0.2, 3.0, 200)
        est = weighted_local_poly(A, 2 + 3 * A, w, degree, span, GRID)
        np.testing.assert_allclose(est.theta_hat, 2 + 3 * GRID, atol=1e-8)

    def test_reproduces_quadratic(self, rng):
        A = rng.uniform(-3, 3, 150)
        Y = 1 - A + 0.5 * A ** 2
        est = weighted_local_poly(A, Y, rng.uniform(0.5, 1.5, 150), 2, 0.4, GRID)
        np.testing.assert_allclose(est.theta_hat, 1 - GRID + 0.5 * GRID ** 2, atol=1e-8)

    def test_local_constant_bounded(self, rng):
        A, Y = rng.normal(size=80), rng.normal(size=80)
        est = weighted_local_poly(A, Y, rng.uniform(0, 1, 80), 0, 1.0, GRID)
        assert est.theta_hat.min() >= Y.min() and est.theta_hat.max() <= Y.max()

    def test_weight_scale_invariance(self, rng):
        A, Y, w = rng.normal(size=60), rng.normal(size=60), rng.uniform(0, 2, 60)
        a = weighted_local_poly(A, Y, w, 2, 0.75, GRID).theta_hat
        b = weighted_local_poly(A, Y, 50 * w, 2, 0.75, GRID).theta_hat
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_rank_fallback_gives_finite_curve(self):
        # only two distinct doses carry weight: degree 2 must fall back
        A = np.array([0.0, 0.0, 1.0, 1.0, 2.0])
        Y = np.array([1.0, 1.0, 3.0, 3.0, 9.0])
        est = weighted_local_poly(A, Y, [1, 1, 1, 1, 0], 2, 1.0, GRID)
        assert np.all(np.isfinite(est.theta_hat))
        # the farthest point sits on the tricube boundary: below 1 that is the
        # unweighted A = 2, from 1 upward it is A = 0, leaving one dose
        left = GRID < 1
        np.testing.assert_allclose(est.theta_hat[left], 1 + 2 * GRID[left], atol=1e-8)
        np.testing.assert_allclose(est.theta_hat[~left], 3.0, atol=1e-12)

    def test_invalid_span(self):
        with pytest.raises(InvalidSpan):
            weighted_local_poly([0.0, 1.0], [0.0, 1.0], None, 1, 0.0)
        with pytest.raises(InputError):
            weighted_local_poly([0.0, 1.0], [0.0, 1.0], None, 3, 0.5)


class TestCurveEstimate:
    def test_grid_checks(self):
        with pytest.raises(InputError):
            CurveEstimate(grid=[0.0, 0.0], theta_hat=[1.0, 1.0])
        with pytest.raises(InputError):
            CurveEstimate(grid=[0.0, 1.0], theta_hat=[1.0])

    def test_outside_band(self):
        c = CurveEstimate(grid=[0.0, 1.0, 2.0], theta_hat=[1.0, 5.0, 1.0],
                          lower=np.zeros(3), upper=np.full(3, 2.0))
        assert c.has_bands
        np.testing.assert_array_equal(c.outside_band(), [1])
