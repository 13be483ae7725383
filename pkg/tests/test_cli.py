import json
import math

import numpy as np
import pandas as pd
import pytest

from valuecombine.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out else None), (json.loads(err) if err else None)


def test_triangulate(capsys):
    code, doc, _ = run(capsys, "triangulate", "--sigma", "1", "--sigma-i", "1", "--sigma-c", "1",
                       "--rho", "0", "--p", "100", "--vi", "90", "--vc", "110")
    assert code == 0
    assert doc["command"] == "triangulate"
    assert set(doc) == {"command", "inputs", "result", "warnings"}
    w = doc["result"]["weights"]
    assert [w["w_price"], w["w_intrinsic"], w["w_comparables"]] == [0.333333333333] * 3
    assert doc["result"]["value"] == 100.0


def test_triangulate_twelve_significant_digits(capsys):
    _, doc, _ = run(capsys, "triangulate", "--sigma", "2", "--sigma-i", "1", "--sigma-c", "1.5", "--rho", "0.3")
    assert doc["result"]["weights"]["w_intrinsic"] == 0.504310344828
    assert doc["result"]["variance"] == 0.504310344828


def test_invert(capsys):
    code, doc, _ = run(capsys, "invert", "--ki", "0.5", "--kc", "0.25", "--rho", "0.5")
    assert code == 0
    assert doc["result"] == {"ratio_c": 1.0, "ratio_i": 0.5}


def test_cases_bundled_name(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, doc, _ = run(capsys, "cases", "--data", "table1.csv")
    assert code == 0
    mean = doc["result"]["mean"]
    std = doc["result"]["std"]
    assert [round(mean[k], 2) for k in ("w_market", "w_asset", "w_earnings")] == [0.27, 0.46, 0.27]
    assert [round(std[k], 2) for k in ("w_market", "w_asset", "w_earnings")] == [0.18, 0.26, 0.17]


def test_cases_with_rho_reports_skips(capsys):
    code, doc, _ = run(capsys, "cases", "--rho", "0.5")
    assert code == 0
    rows = doc["result"]["cases"]
    assert len(rows) == 12
    assert sum(r["skipped"] for r in rows) == 4
    assert len(doc["warnings"]) == 4
    assert rows[0]["ratio_c"] == 1.0 and rows[0]["ratio_i"] == 0.5


def test_cases_data_dir_env(capsys, tmp_path, monkeypatch):
    (tmp_path / "mine.csv").write_text("name,year,w_market,w_asset,w_earnings\nA,1990,0.2,0.3,0.5\nB,1991,0.4,0.3,0.3\n")
    monkeypatch.setenv("VALUECOMBINE_DATA_DIR", str(tmp_path))
    code, doc, _ = run(capsys, "cases", "--data", "mine.csv")
    assert code == 0
    assert doc["result"]["n"] == 2


def test_block(capsys):
    code, doc, _ = run(capsys, "block", "--price", "100", "--net-asset", "120", "--avg-earnings", "10",
                       "--cap-factor", "8", "--w-market", "0", "--w-asset", "0.4", "--w-earnings", "0.6")
    assert code == 0
    assert doc["result"]["value"] == 96.0


@pytest.fixture
def forecast_csv(tmp_path):
    rng = np.random.default_rng(3)
    y = rng.normal(size=80)
    frame = pd.DataFrame({
        "date": pd.date_range("2010-01-01", periods=80, freq="MS").strftime("%Y-%m-%d"),
        "realization": y,
        "forecast_dcf": y + 0.5 * rng.normal(size=80),
        "forecast_comps": y + 1.0 * rng.normal(size=80),
    })
    path = tmp_path / "panel.csv"
    frame.to_csv(path, index=False)
    return path


@pytest.mark.parametrize("method", ["regression", "vc"])
def test_combine(capsys, forecast_csv, method):
    code, doc, _ = run(capsys, "combine", "--data", str(forecast_csv), "--method", method)
    assert code == 0
    w = doc["result"]["weights"]
    assert set(w) == {"dcf", "comps"}
    assert w["dcf"] + w["comps"] == pytest.approx(1.0, abs=1e-11)
    assert w["dcf"] > w["comps"]


def test_combine_rolling(capsys, forecast_csv):
    code, doc, _ = run(capsys, "combine", "--data", str(forecast_csv), "--method", "rolling", "--window", "20",
                       "--shrink-lambda", "0.5")
    assert code == 0
    rows = doc["result"]["rolling"]
    assert len(rows) == 61
    assert rows[0]["date"] == "2011-08-01"


def test_combine_rolling_needs_window(capsys, forecast_csv):
    code, _, err = run(capsys, "combine", "--data", str(forecast_csv), "--method", "rolling")
    assert code == 1
    assert err["field"] == "window"


def test_backtest_csv(capsys, tmp_path):
    rng = np.random.default_rng(4)
    P, b, E = rng.uniform(5, 35, size=(3, 30))
    frame = pd.DataFrame({
        "date": pd.date_range("2000-01-01", periods=30, freq="YS").strftime("%Y-%m-%d"),
        "price_next": 0.2 * P + 0.5 * b + 0.3 * E, "price": P, "net_asset": b, "cap_earnings": E,
    })
    path = tmp_path / "val.csv"
    frame.to_csv(path, index=False)
    code, doc, _ = run(capsys, "backtest", "--data", str(path), "--window", "10")
    assert code == 0
    c = doc["result"]["coefficients"]
    assert (c["price"], c["net_asset"], c["cap_earnings"]) == pytest.approx((0.2, 0.5, 0.3), abs=1e-9)
    assert doc["result"]["biased"] is False
    assert len(doc["result"]["rolling"]) == 21


def test_backtest_simulated_is_deterministic(capsys):
    argv = ["backtest", "--simulate", "500", "--seed", "9", "--sigma", "2", "--sigma-i", "1",
            "--sigma-c", "1.5", "--rho", "0.3", "--constrain"]
    code, first, _ = run(capsys, *argv)
    assert code == 0
    _, second, _ = run(capsys, *argv)
    assert first == second
    assert first["result"]["coef_sum"] == pytest.approx(1.0, abs=1e-10)


def test_simulate_byte_identical(capsys, tmp_path):
    argv = ["simulate", "--sigma", "2", "--sigma-i", "1", "--sigma-c", "1.5", "--rho", "0.3",
            "--n", "20000", "--seed", "3"]
    main(argv + ["--output", str(tmp_path / "a.json")])
    main(argv + ["--output", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["result"]["oracle_max_abs_diff"] < 1e-6


def test_simulate_dump(capsys, tmp_path):
    dump = tmp_path / "samples.csv"
    code, doc, _ = run(capsys, "simulate", "--sigma", "1", "--sigma-i", "1", "--sigma-c", "1", "--rho", "0",
                       "--n", "50", "--dump", str(dump))
    assert code == 0
    assert dump.read_text().splitlines()[0] == "v,price,v_i,v_c"


@pytest.mark.parametrize(
    "argv, status, field",
    [
        (["triangulate", "--sigma", "-1", "--sigma-i", "1", "--sigma-c", "1", "--rho", "0"], 1, "sigma_p"),
        (["triangulate", "--sigma", "0", "--sigma-i", "0", "--sigma-c", "1", "--rho", "0"], 2, "sigma_p,sigma_i"),
        (["triangulate", "--sigma", "1", "--sigma-i", "1", "--sigma-c", "1"], 1, "arguments"),
        (["invert", "--ki", "0", "--kc", "0.3", "--rho", "0.2"], 2, "kappa_i"),
        (["block", "--price", "1", "--net-asset", "1", "--avg-earnings", "1", "--cap-factor", "5",
          "--w-market", "0.5", "--w-asset", "0.5", "--w-earnings", "0.5"], 1, "weights"),
        (["cases", "--data", "does-not-exist.csv"], 1, "data"),
        (["simulate", "--sigma", "1", "--sigma-i", "1", "--sigma-c", "1", "--rho", "0.9", "--rho-i", "0.9"],
         2, "rho,rho_i"),
        (["frobnicate"], 1, "arguments"),
    ],
)
def test_error_paths(capsys, argv, status, field):
    code, out, err = run(capsys, *argv)
    assert code == status
    assert out is None
    assert err["field"] == field
    assert err["message"]


def test_non_finite_becomes_null():
    from valuecombine.cli import to_jsonable

    assert to_jsonable({"x": math.nan, "y": np.float64(1 / 3)}) == {"x": None, "y": 0.333333333333}
