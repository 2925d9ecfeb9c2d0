import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from koow.data import Dataset, PipelineConfig, load_csv, write_csv
from koow.errors import (ConstantTreatment, InvalidSpan, MissingColumn, NegativeLambda,
                         NonNumericCell, TooFewRows)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_three_rows(tmp_path):
    path = write(tmp_path, "a,x1,y\n0.5,1,2\n1.5,2,3\n-1,0,1\n")
    ds = load_csv(path, "a", "y", ["x1"])
    assert (ds.n, ds.p) == (3, 1)
    np.testing.assert_array_equal(ds.A, [0.5, 1.5, -1.0])
    np.testing.assert_array_equal(ds.X[:, 0], [1, 2, 0])
    np.testing.assert_array_equal(ds.Y, [2, 3, 1])
    assert ds.confounder_names == ("x1",)


def test_missing_column(tmp_path):
    path = write(tmp_path, "a,x1,y\n0.5,1,2\n1.5,2,3\n-1,0,1\n")
    with pytest.raises(MissingColumn) as info:
        load_csv(path, "a", "y", ["x9"])
    assert info.value.name == "x9"


def test_constant_treatment(tmp_path):
    path = write(tmp_path, "a,x1\n0.5,1\n0.5,2\n0.5,3\n")
    with pytest.raises(ConstantTreatment):
        load_csv(path, "a", None, ["x1"])


def test_non_numeric_cell_reports_position(tmp_path):
    path = write(tmp_path, "a,x1\n0.5,1\n0.7,oops\n")
    with pytest.raises(NonNumericCell) as info:
        load_csv(path, "a", None, ["x1"])
    assert (info.value.row, info.value.col) == (2, "x1")


@pytest.mark.parametrize("cell", ["", "nan", "inf", "-inf"])
def test_missing_and_non_finite_rejected(tmp_path, cell):
    path = write(tmp_path, f"a,x1\n0.5,1\n0.7,{cell}\n1.0,2\n")
    with pytest.raises(NonNumericCell):
        load_csv(path, "a", None, ["x1"])


def test_too_few_rows(tmp_path):
    path = write(tmp_path, "a,x1\n0.5,1\n")
    with pytest.raises(TooFewRows):
        load_csv(path, "a", None, ["x1"])


def test_dataset_is_read_only():
    ds = Dataset(X=[[1.0], [2.0]], A=[0.0, 1.0])
    with pytest.raises(ValueError):
        ds.A[0] = 3.0


def test_order_preserved_and_deterministic(tmp_path, rng):
    X = rng.normal(size=(25, 2))
    ds = Dataset(X=X, A=rng.normal(size=25), Y=rng.normal(size=25))
    path = tmp_path / "rt.csv"
    write_csv(ds, path)
    one = load_csv(path, "a", "y", ["x1", "x2"])
    two = load_csv(path, "a", "y", ["x1", "x2"])
    np.testing.assert_array_equal(one.X, two.X)
    np.testing.assert_array_equal(one.X, X)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (6, 3), elements=finite))
def test_round_trip_bit_exact(tmp_path_factory, arr):
    A = arr[:, 0].copy()
    A[0], A[1] = 0.0, 1.0  # guarantee nonzero variance
    ds = Dataset(X=arr[:, 1:], A=A, Y=arr[:, 2])
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(ds, path)
    back = load_csv(path, "a", "y", list(ds.confounder_names))
    assert back.A.tobytes() == ds.A.tobytes()
    assert back.X.tobytes() == ds.X.tobytes()
    assert back.Y.tobytes() == ds.Y.tobytes()


def test_config_validation():
    with pytest.raises(NegativeLambda):
        PipelineConfig(lam=-1)
    with pytest.raises(InvalidSpan):
        PipelineConfig(span=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(poly_degree=4)
    with pytest.raises(ValueError):
        PipelineConfig(grid=(-3, 3, 1))
    assert PipelineConfig().grid_points().shape == (1000,)
