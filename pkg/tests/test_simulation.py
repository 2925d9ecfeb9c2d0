import numpy as np
import pytest

from koow.data import PipelineConfig
from koow.errors import GridMismatch, InputError
from koow.simulation import (RESULT_COLUMNS, TRUE_COEFFICIENTS, generate, iab_irmse,
                             results_csv, run_study, scenario, stable_ipw_weights, table_layout, true_curve)


class TestGenerate:
    def test_deterministic(self):
        a, _ = generate(scenario("cubic", n=50), 4)
        b, _ = generate(scenario("cubic", n=50), 4)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Y, b.Y)

    def test_structure(self):
        ds, beta = generate(scenario("quadratic", n=2000), 0)
        S = ds.X.sum(axis=1)
        assert ds.p == 5
        assert np.var(ds.X, axis=0).mean() == pytest.approx(5.0, rel=0.1)
        resid = ds.A - (-3.0 + 0.25 * S ** 2)
        assert np.var(resid) == pytest.approx(5.0, rel=0.1)
        expect = true_curve(ds.A) + 1.5 * S + 1.125 * ds.A * S
        np.testing.assert_allclose(ds.Y, expect, rtol=1e-12, atol=1e-10)

    def test_no_confounding_override(self):
        ds, _ = generate(scenario("linear", n=30, confounding=0.0), 1)
        np.testing.assert_allclose(ds.Y, true_curve(ds.A))

    def test_unknown(self):
        with pytest.raises(InputError):
            scenario("quartic")


def test_true_curve_value():
    assert true_curve([2.0])[0] == pytest.approx(1.78)


def test_true_curve_identity():
    from koow.dose_response import evaluate_parametric
    grid = scenario("linear").grid_points()
    est = evaluate_parametric(TRUE_COEFFICIENTS, grid).theta_hat
    np.testing.assert_allclose(est, true_curve(grid), rtol=1e-12, atol=1e-12)
    assert true_curve([0.0])[0] == 0.0


def test_no_confounding_switch():
    rows = run_study(["linear"], [], ["unweighted"], R=1, n=300, seed=0, estimators=["poly"],
                     spec_overrides={"confounding": 0.0})
    assert rows[0]["iab"] < 1e-9


class TestIPW:
    def test_improves_balance(self):
        from koow.diagnostics import balance_table
        better = 0
        for seed in range(100):
            ds, _ = generate(scenario("linear", n=500), seed)
            rep = balance_table(ds, stable_ipw_weights(ds))
            better += rep.mean_abs_corr_weighted < rep.mean_abs_corr_unweighted
        assert better >= 90

    def test_truncation_and_total(self):
        ds, _ = generate(scenario("linear", n=400), 2)
        w, n_trunc = stable_ipw_weights(ds, return_info=True)
        assert w.sum() == pytest.approx(400)
        assert w.min() > 0
        assert 1 <= n_trunc <= 5
        assert np.count_nonzero(w == w.max()) >= n_trunc

    def test_independent_treatment_gives_near_uniform(self, rng):
        from koow.data import Dataset
        X = rng.normal(size=(1000, 5))
        ds = Dataset(X=X, A=rng.normal(size=1000))
        w = stable_ipw_weights(ds)
        assert np.std(w) / np.mean(w) < 0.2


class TestScores:
    def test_spec_cases(self):
        truth = np.linspace(-1, 1, 5)
        assert iab_irmse(truth[None, :], truth) == (0.0, 0.0)
        assert iab_irmse((truth + 1)[None, :], truth) == pytest.approx((1.0, 1.0))
        assert iab_irmse(np.vstack([truth + 1, truth - 1]), truth) == pytest.approx((0.0, 1.0))

    def test_hand_values(self):
        truth = np.zeros(2)
        est = np.array([[1.0, -1.0], [3.0, 1.0]])
        iab, irmse = iab_irmse(est, truth)
        # mean errors (2, 0); rms errors (sqrt(5), 1)
        assert iab == pytest.approx(1.0)
        assert irmse == pytest.approx((np.sqrt(5) + 1) / 2)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            iab_irmse(np.zeros((2, 3)), np.zeros(4))


class TestStudy:
    @pytest.fixture(scope="class")
    @classmethod
    def rows(cls):
        cfg = PipelineConfig(tune=False, gamma=1.0)
        return run_study(["linear"], [0.0, 10.0], ["unweighted"], R=2, n=120, seed=5,
                         config=cfg)

    def test_rows(self, rows):
        assert len(rows) == 3 * 2
        assert all(r["failures"] == 0 for r in rows)
        assert {r["method"] for r in rows} == {"koow", "unweighted"}

    def test_reproducible(self, rows):
        cfg = PipelineConfig(tune=False, gamma=1.0)
        again = run_study(["linear"], [0.0, 10.0], ["unweighted"], R=2, n=120, seed=5,
                          config=cfg)
        assert results_csv(again) == results_csv(rows)

    def test_layouts(self, rows):
        text = results_csv(rows)
        assert text.splitlines()[0] == ",".join(RESULT_COLUMNS)
        table = table_layout(rows, "local")
        assert "KOOW lambda=0" in table and "unweighted" in table

    def test_bad_arguments(self):
        with pytest.raises(InputError):
            run_study(R=0)
        with pytest.raises(InputError):
            run_study(estimators=["spline"])
