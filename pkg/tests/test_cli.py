import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nogear.cli import main, read_series
from nogear.estimation import FitResult
from nogear.model import RngSpec, simulate

P1 = ["--alpha", "0.6", "--beta", "0.4", "--theta", "0.75"]


@pytest.fixture
def series_csv(tmp_path, p1):
    path = tmp_path / "x.csv"
    x = simulate(p1, 150, RngSpec(21)).values
    path.write_text("count\n" + "".join(f"{v}\n" for v in x))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def csv_rows(path):
    """Rows of an output CSV after checking its leading manifest comment."""
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest {")
    return list(csv.reader(lines[1:]))


# --- input parsing ------------------------------------------------------------------

def test_read_series_formats(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("# comment\ncount\n1\n2\n0\n")
    np.testing.assert_array_equal(read_series(str(a)).values, [1, 2, 0])
    b = tmp_path / "b.csv"
    b.write_text("date,count\n2020-01,3\n2020-02,4\n")
    np.testing.assert_array_equal(read_series(str(b)).values, [3, 4])
    c = tmp_path / "c.csv"
    c.write_text("5\n6\n")
    np.testing.assert_array_equal(read_series(str(c)).values, [5, 6])


@pytest.mark.parametrize("text", ["", "count\n", "count\n1\n-2\n", "count\n1.5\n", "count\nabc\n"])
def test_bad_series_is_input_error(tmp_path, text, capsys):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    assert run("fit", "--input", path) == 3
    assert "error" in capsys.readouterr().err


def test_missing_file_is_input_error(tmp_path):
    assert run("fit", "--input", tmp_path / "nope.csv") == 3


# --- exit codes ------------------------------------------------------------------------

def test_usage_errors():
    assert run("bogus") == 2
    assert run("simulate", "--n", "10", "--alpha", "0.4", "--beta", "0.6", "--theta", "0.75") == 2
    assert run("simulate", "--n", "10", "--alpha", "0.6") == 2
    assert run("simulate", "--n", "0", *P1) == 2
    assert run("forecast", "--origin", "2") == 2
    assert run("forecast", *P1, "--origin", "2", "--delta", "1.5") == 2
    assert run("forecast", *P1, "--origin", "2", "--h", "0") == 2


def test_constant_series_is_degenerate(tmp_path):
    path = tmp_path / "flat.csv"
    path.write_text("count\n" + "3\n" * 40)
    assert run("fit", "--input", path) == 4


# --- simulate --------------------------------------------------------------------------

def test_simulate_file_and_summary(tmp_path, capsys, p1):
    out = tmp_path / "sim.csv"
    assert run("simulate", *P1, "--n", 200, "--seed", 3, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    m = json.loads(lines[0][len("# manifest "):])
    assert m["seed"] == 3 and m["config"]["n"] == 200 and "numpy" in m["versions"]
    assert lines[1] == "count"
    values = [int(v) for v in lines[2:]]
    assert values == simulate(p1, 200, RngSpec(3)).values.tolist()
    assert capsys.readouterr().out.startswith("n=200 mean=")


def test_simulate_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "sim.csv"
    run("simulate", *P1, "--n", 100, "--seed", 8, "--out", out)
    first = out.read_bytes()
    run("simulate", *P1, "--n", 100, "--seed", 8, "--out", out)
    assert out.read_bytes() == first


def test_simulate_to_stdout(capsys):
    assert run("simulate", "--model", "pinar", "--lam", "2", "--alpha-thin", "0.3", "--n", 5) == 0
    cap = capsys.readouterr()
    assert cap.out.splitlines()[1] == "count" and len(cap.out.splitlines()) == 7
    assert cap.err.startswith("n=5")


# --- fit ---------------------------------------------------------------------------------

def test_fit_writes_json(tmp_path, series_csv, capsys):
    out = tmp_path / "fit.json"
    assert run("fit", "--input", series_csv, "--out", out, "--restarts", 1) == 0
    d = json.loads(out.read_text())
    assert d["series"]["n"] == 150 and len(d["fits"]) == 1
    res = FitResult.from_dict(d["fits"][0])
    assert res.n_eff == 149 and res.family.value == "nogear"
    assert "AIC" in capsys.readouterr().out


def test_fit_all_sorted_by_aic(tmp_path, series_csv):
    out = tmp_path / "fit.json"
    assert run("fit", "--model", "all", "--input", series_csv, "--out", out, "--restarts", 0) == 0
    fits = json.loads(out.read_text())["fits"]
    assert sorted(f["family"] for f in fits) == ["ginar", "nginar", "nogear", "pinar"]
    aics = [f["aic"] for f in fits]
    assert aics == sorted(aics)


def test_fit_rerun_is_byte_identical(tmp_path, series_csv):
    out = tmp_path / "fit.json"
    run("fit", "--input", series_csv, "--out", out, "--restarts", 1)
    first = out.read_bytes()
    run("fit", "--input", series_csv, "--out", out, "--restarts", 1)
    assert out.read_bytes() == first


# --- forecast ------------------------------------------------------------------------------

def test_forecast_from_zero(tmp_path):
    out = tmp_path / "fc.json"
    assert run("forecast", *P1, "--origin", 0, "--h", 1, 2, "--out", out) == 0
    d = json.loads(out.read_text())
    f1 = d["forecasts"][0]
    assert f1["horizon"] == 1 and f1["median"] == 0 and f1["mode"] == 0
    assert f1["hpp"]["lower"] == 0 and f1["hpp"]["achieved_coverage"] >= 0.95
    assert sum(f1["probs"]) == pytest.approx(1.0)
    assert d["forecasts"][1]["horizon"] == 2


def test_forecast_from_fit_file_and_series(tmp_path, series_csv):
    fit = tmp_path / "fit.json"
    run("fit", "--model", "all", "--input", series_csv, "--out", fit, "--restarts", 0)
    out = tmp_path / "fc.json"
    pmf = tmp_path / "pmf.csv"
    assert run("forecast", "--fit", fit, "--input", series_csv, "--h", 1, "--out", out,
               "--pmf-csv", pmf, "--display-max", 10) == 0
    d = json.loads(out.read_text())
    best = min(json.loads(fit.read_text())["fits"], key=lambda f: f["aic"])
    assert d["family"] == best["family"]
    last = int(series_csv.read_text().split()[-1])
    assert d["origin"] == last
    assert len(d["forecasts"][0]["probs"]) == 11
    rows = csv_rows(pmf)
    assert rows[0] == ["horizon", "x", "prob"] and len(rows) == d["M"] + 2


def test_forecast_bad_fit_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"something": 1}')
    assert run("forecast", "--fit", bad, "--origin", 1) == 3
    bad.write_text("not json")
    assert run("forecast", "--fit", bad, "--origin", 1) == 3


# --- experiments ----------------------------------------------------------------------------

def test_evaluate(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "generator": {"family": "nogear", "params": {"alpha": 0.6, "beta": 0.4, "theta": 0.75}},
        "fitted_families": ["nogear", "pinar"],
        "n_total": 50,
        "replications": 2,
        "fit_restarts": 0,
    }))
    assert run("evaluate", "--config", cfg, "--out-dir", tmp_path / "out") == 0
    d = json.loads((tmp_path / "out" / "accuracy.json").read_text())
    assert len(d["cells"]) == 4 and d["config"]["n_total"] == 50
    rows = csv_rows(tmp_path / "out" / "accuracy.csv")
    assert rows[0][0] == "family" and len(rows) == 5


def test_evaluate_bad_config(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"fitted_families": ["nogear"]}))
    assert run("evaluate", "--config", cfg, "--out-dir", tmp_path) == 3
    cfg.write_text(json.dumps({
        "generator": {"family": "nogear", "params": {"alpha": 0.4, "beta": 0.6, "theta": 0.75}},
        "fitted_families": ["nogear"], "n_total": 50,
    }))
    assert run("evaluate", "--config", cfg, "--out-dir", tmp_path) == 2


def test_coverage(tmp_path):
    cfg = tmp_path / "cov.json"
    cfg.write_text(json.dumps({
        "sets": [{"label": "I", "alpha": 0.6, "beta": 0.4, "theta": 0.75},
                 {"label": "II", "alpha": 0.7, "beta": 0.3, "theta": 0.5}],
        "n_list": [40],
        "horizons": [1],
        "replications": 5,
        "fit": False,
    }))
    assert run("coverage", "--config", cfg, "--out-dir", tmp_path / "cov") == 0
    d = json.loads((tmp_path / "cov" / "coverage.json").read_text())
    assert [c["label"] for c in d["cells"]] == ["I", "II"]
    assert len(csv_rows(tmp_path / "cov" / "coverage.csv")) == 3


# --- diagnose ----------------------------------------------------------------------------------

def test_diagnose_outputs(tmp_path, series_csv, capsys):
    out = tmp_path / "diag"
    assert run("diagnose", "--input", series_csv, *P1, "--out-dir", out, "--bins", 5) == 0
    d = json.loads((out / "diagnostics.json").read_text())
    assert d["notes"]["params_source"] == "flags" and len(d["pit_bins"]) == 5
    for name in ("pit.csv", "acf.csv", "jumps.csv"):
        csv_rows(out / name)
    assert len(csv_rows(out / "jumps.csv")) == 150
    assert "Ljung-Box" in capsys.readouterr().out


def test_diagnose_fits_when_no_params(tmp_path, series_csv):
    out = tmp_path / "diag"
    assert run("diagnose", "--input", series_csv, "--model", "ginar", "--restarts", 0, "--out-dir", out) == 0
    d = json.loads((out / "diagnostics.json").read_text())
    assert d["family"] == "ginar" and d["notes"]["params_source"].startswith("fitted")


def test_diagnose_rejects_bins():
    assert run("diagnose", "--input", "x.csv", "--out-dir", "d", "--bins", 1) == 2


# --- entry point ---------------------------------------------------------------------------------

def test_module_entry_point_exit_code():
    proc = subprocess.run([sys.executable, "-m", "nogear.cli", "forecast", "--origin", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "forecast needs" in proc.stderr
