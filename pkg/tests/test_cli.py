import json
import subprocess
import sys

import numpy as np
import pytest

from koow.cli import main
from koow.data import write_csv
from koow.simulation import generate, scenario

CONF = "x1,x2,x3,x4,x5"


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    ds, _ = generate(scenario("linear", n=50), 3)
    path = tmp_path_factory.mktemp("data") / "sim.csv"
    write_csv(ds, path)
    return path


def base(path, *extra):
    return ["--data", str(path), "--treatment", "a", "--confounders", CONF, *extra]


def outputs(prefix):
    return {p.name[len(prefix.name):]: p.read_bytes()
            for p in sorted(prefix.parent.glob(prefix.name + "_*"))}


class TestWeights:
    def test_smoke(self, data_csv, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["weights", *base(data_csv, "--out", str(out))]) == 0
        files = outputs(out)
        assert set(files) == {"_weights.csv", "_solver.json", "_balance.json"}
        lines = files["_weights.csv"].decode().splitlines()
        assert lines[0] == "row_index,weight,weight_normalized" and len(lines) == 51
        solver = json.loads(files["_solver.json"])
        assert solver["converged"] and solver["schema_version"] == 1
        assert "mean" in capsys.readouterr().out

    def test_byte_identical(self, data_csv, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = base(data_csv, "--outcome", "y", "--tune", "--dump-gram", "--lambda", "0.5")
        assert main(["weights", *args, "--out", str(a)]) == 0
        assert main(["weights", *args, "--out", str(b)]) == 0
        fa, fb = outputs(a), outputs(b)
        assert "_hyperparams.json" in fa and "_gram_x.csv" in fa
        assert fa == fb

    def test_config_file_and_override(self, data_csv, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"lambda": 3.0, "degree_x": 2}))
        out = tmp_path / "c"
        assert main(["weights", *base(data_csv, "--config", str(conf), "--out", str(out))]) == 0
        assert json.loads((tmp_path / "c_solver.json").read_text())["lambda"] == 3.0
        main(["weights", *base(data_csv, "--config", str(conf), "--lambda", "2",
                               "--out", str(out))])
        assert json.loads((tmp_path / "c_solver.json").read_text())["lambda"] == 2.0

    def test_input_unchanged(self, data_csv, tmp_path):
        before = data_csv.read_bytes()
        main(["weights", *base(data_csv, "--out", str(tmp_path / "u"))])
        assert data_csv.read_bytes() == before


class TestErrors:
    def run(self, argv, capsys):
        code = main(argv)
        return code, capsys.readouterr().err

    def test_negative_lambda(self, data_csv, tmp_path, capsys):
        code, err = self.run(["weights", *base(data_csv, "--lambda", "-1",
                                               "--out", str(tmp_path / "x"))], capsys)
        assert code == 1 and "--lambda" in err and "E_NEGATIVE_LAMBDA" in err

    def test_tune_without_outcome(self, data_csv, tmp_path, capsys):
        code, err = self.run(["weights", *base(data_csv, "--tune",
                                               "--out", str(tmp_path / "x"))], capsys)
        assert code == 1 and "tuning requires an outcome column" in err

    def test_missing_column(self, data_csv, tmp_path, capsys):
        code, err = self.run(["weights", "--data", str(data_csv), "--treatment", "a",
                              "--confounders", "x1,zz", "--out", str(tmp_path / "x")], capsys)
        assert code == 1 and "E_MISSING_COLUMN" in err

    def test_missing_file(self, tmp_path, capsys):
        code, err = self.run(["weights", *base(tmp_path / "nope.csv")], capsys)
        assert code == 1 and "E_IO" in err

    def test_non_numeric(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,x1\n1,2\n2,x\n3,4\n")
        code, err = self.run(["weights", "--data", str(bad), "--treatment", "a",
                              "--confounders", "x1", "--out", str(tmp_path / "x")], capsys)
        assert code == 1 and "E_NON_NUMERIC" in err

    def test_constant_treatment(self, tmp_path, capsys):
        bad = tmp_path / "c.csv"
        bad.write_text("a,x1\n1,2\n1,3\n1,4\n")
        code, err = self.run(["weights", "--data", str(bad), "--treatment", "a",
                              "--confounders", "x1", "--out", str(tmp_path / "x")], capsys)
        assert code == 1 and "E_CONSTANT_TREATMENT" in err

    def test_not_converged_still_writes(self, data_csv, tmp_path, capsys):
        out = tmp_path / "nc"
        code, _ = self.run(["weights", *base(data_csv, "--lambda", "0", "--max-iter", "1",
                                             "--out", str(out))], capsys)
        assert code == 2
        assert (tmp_path / "nc_weights.csv").exists()
        assert not json.loads((tmp_path / "nc_solver.json").read_text())["converged"]

    def test_bad_span_and_estimator(self, data_csv, tmp_path, capsys):
        args = base(data_csv, "--outcome", "y", "--out", str(tmp_path / "x"))
        code, err = self.run(["curve", *args, "--span", "0"], capsys)
        assert code == 1 and "E_INVALID_SPAN" in err
        code, err = self.run(["curve", *args, "--estimator", "spline:3"], capsys)
        assert code == 1

    def test_curve_needs_outcome(self, data_csv, tmp_path, capsys):
        code, err = self.run(["curve", *base(data_csv, "--out", str(tmp_path / "x"))], capsys)
        assert code == 1 and "E_MISSING_OUTCOME" in err

    def test_unknown_scenario(self, capsys):
        code, err = self.run(["simulate", "--scenario", "quartic", "--R", "1"], capsys)
        assert code == 1 and "quartic" in err


class TestCurve:
    def test_poly_grid(self, data_csv, tmp_path):
        out = tmp_path / "p"
        args = base(data_csv, "--outcome", "y", "--estimator", "poly:3", "--grid", "-3:3:1000",
                    "--out", str(out))
        assert main(["curve", *args]) == 0
        rows = (tmp_path / "p_curve.csv").read_text().splitlines()
        assert rows[0] == "a,theta_hat,lower,upper" and len(rows) == 1001
        assert rows[1].endswith(",,")
        assert not (tmp_path / "p_bootstrap.json").exists()

    def test_bootstrap_byte_identical(self, data_csv, tmp_path):
        args = base(data_csv, "--outcome", "y", "--grid", "-2:2:50", "--bootstrap", "8",
                    "--seed", "4")
        assert main(["curve", *args, "--out", str(tmp_path / "a")]) == 0
        assert main(["curve", *args, "--workers", "2", "--out", str(tmp_path / "b")]) == 0
        fa, fb = outputs(tmp_path / "a"), outputs(tmp_path / "b")
        assert fa == fb
        lo = np.genfromtxt(tmp_path / "a_curve.csv", delimiter=",", skip_header=1)
        assert np.all(lo[:, 2] <= lo[:, 3])


class TestSimulate:
    def test_smoke_and_determinism(self, tmp_path):
        args = ["simulate", "--scenario", "linear", "--R", "2", "--n", "100",
                "--estimators", "local"]
        assert main([*args, "--out", str(tmp_path / "s1.csv")]) == 0
        assert main([*args, "--out", str(tmp_path / "s2.csv")]) == 0
        a = (tmp_path / "s1.csv").read_bytes()
        assert a == (tmp_path / "s2.csv").read_bytes()
        assert len(a.decode().splitlines()) == 1 + 5


def test_module_entry_point(data_csv, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "koow", "weights", *base(
        data_csv, "--out", str(tmp_path / "m"))], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
