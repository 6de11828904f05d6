import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import trapezoid

from flexreg.cli import OUTPUT_ENV, main

FAST = ["--iterations", "120", "--burn-in", "40", "--seed", "3"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "study1", "--n", "150", "--seed", "1", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    rc = main(["fit", "--data", str(sim_dir / "data.csv"), "--J", "2", "--K", "3", *FAST,
               "--truth-json", str(sim_dir / "truth.json"), "--out", str(out)])
    assert rc == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_nu_grid_reproduces_reference(tmp_path, capsys):
    assert main(["nu-grid", "--min", "2.8", "--max", "14.4", "--k", "4", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "nu_grid.json").read_text())
    assert [r["nu_rounded"] for r in res["grid"]] == [2.8, 3.2, 4.0, 14.4]
    assert max(res["comparison"]["abs_deviation"]) < 0.3
    assert "reference grid" in capsys.readouterr().out
    assert json.loads((tmp_path / "config.json").read_text())["command"] == "nu-grid"


@pytest.mark.parametrize("argv", [
    ["nu-grid", "--min", "1.5", "--max", "14.4", "--k", "4"],
    ["nu-grid", "--min", "2.8", "--max", "14.4", "--k", "1"],
    ["simulate", "study1", "--n", "0"],
    ["fit", "--data", "missing.csv", "--J", "2"],
    ["fit", "--data", "galaxies", "--J", "2", "--iterations", "10", "--burn-in", "10"],
    ["fit", "--data", "galaxies", "--J", "2", "--chains", "0"],
    ["fit", "--data", "galaxies", "--J", "3", "--variant", "ordinary-t", "--nu", "3,4"],
    ["predict", "--chain", "missing.csv"],
    ["predict", "--chain", "missing.csv", "--level", "1.5"],
])
def test_invalid_arguments_exit_nonzero(tmp_path, argv, capsys):
    assert main([*argv, "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_outputs(sim_dir):
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert truth["error_variance"] == pytest.approx(3.975)
    assert truth["self_check"]["reference_variance"] == 3.975
    rows = read_rows(sim_dir / "data.csv")
    assert len(rows) == 150 and list(rows[0]) == ["id", "y", "x1", "x2"]


def test_fit_outputs(fit_dir):
    rep = json.loads((fit_dir / "report.json").read_text())["chains"][0]
    assert rep["draws"] == 80
    for key in ("dic", "dic_var", "dbar", "dbar_global", "dbar_tail", "beta0_mean"):
        assert np.isfinite(rep[key]), key
    assert "bias" in rep["v_eps_posterior"]
    assert len(read_rows(fit_dir / "chain_1.csv")) == 80
    side = json.loads((fit_dir / "chain_1.json").read_text())
    assert side["spec"]["nu"] == [2.8, 3.5, 14.4]
    dens = np.array([[float(r["x"]), float(r["density"])] for r in read_rows(fit_dir / "density.csv")])
    assert trapezoid(dens[:, 1], dens[:, 0]) == pytest.approx(1.0, abs=0.05)


def test_fit_is_deterministic(sim_dir, fit_dir, tmp_path):
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--J", "2", "--K", "3", *FAST,
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "chain_1.csv").read_bytes() == (fit_dir / "chain_1.csv").read_bytes()


def test_single_stored_draw(sim_dir, tmp_path):
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--J", "1", "--nu", "4",
                 "--iterations", "101", "--burn-in", "100", "--out", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "chain_1.csv")) == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envout"))
    assert main(["nu-grid", "--min", "2.8", "--max", "14.4", "--k", "3"]) == 0
    assert (tmp_path / "envout" / "nu_grid.json").exists()


def test_predict_with_and_without_response(fit_dir, sim_dir, tmp_path):
    out = tmp_path / "p"
    assert main(["predict", "--chain", str(fit_dir / "chain_1.csv"), "--level", "0.9", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["rmse"] > 0 and 0 <= metrics["coverage"] <= 1
    rows = read_rows(out / "predictions.csv")
    assert len(rows) == 150 and "hpd90_lo" in rows[0] and rows[0]["y_true"]

    new = tmp_path / "new.csv"
    new.write_text("id,x1,x2\na,0.0,0.5\nb,1.0,0.1\n")
    out2 = tmp_path / "p2"
    assert main(["predict", "--chain", str(fit_dir / "chain_1.csv"), "--data", str(new), "--out", str(out2)]) == 0
    rows = read_rows(out2 / "predictions.csv")
    assert [r["id"] for r in rows] == ["a", "b"] and rows[0]["y_true"] == ""
    assert not (out2 / "metrics.json").exists()


def test_compare_sorts_and_checks_data(fit_dir, sim_dir, tmp_path, capsys):
    other = tmp_path / "j1"
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--J", "1", "--K", "2", *FAST,
                 "--out", str(other)]) == 0
    out = tmp_path / "cmp"
    assert main(["compare", "--chains", str(fit_dir / "chain_1.csv"), str(other / "chain_1.csv"),
                 "--out", str(out)]) == 0
    rows = json.loads((out / "compare.json").read_text())["rows"]
    assert [r["dic"] for r in rows] == sorted(r["dic"] for r in rows)

    gal = tmp_path / "gal"
    assert main(["fit", "--data", "galaxies", "--J", "1", "--K", "2", *FAST, "--out", str(gal)]) == 0
    capsys.readouterr()
    assert main(["compare", "--chains", str(fit_dir / "chain_1.csv"), str(gal / "chain_1.csv"),
                 "--out", str(out)]) == 2
    assert "different" in capsys.readouterr().err


def test_multiple_chains(tmp_path):
    assert main(["fit", "--data", "galaxies", "--J", "2", "--K", "2", "--chains", "2", *FAST,
                 "--out", str(tmp_path)]) == 0
    a, b = (tmp_path / "chain_1.csv").read_bytes(), (tmp_path / "chain_2.csv").read_bytes()
    assert a != b
    seeds = json.loads((tmp_path / "config.json").read_text())["params"]["chain_seeds"]
    assert len(set(seeds)) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "flexreg", "nu-grid", "--min", "2.8", "--max", "14.4", "--k", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "14.4" in res.stdout
