from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from roboadvise.cli import dispatch


def _run(*argv):
    return dispatch([str(a) for a in argv])


def _last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_unknown_subcommand_is_usage_error(capsys):
    assert _run("frobnicate") == 2
    assert _last_error(capsys)["exit_code"] == 2


def test_missing_required_flag(capsys, tmp_path):
    assert _run("infer", "--prices", tmp_path / "p.csv") == 2
    rec = _last_error(capsys)
    assert rec["error"] == "UsageError" and "--holdings" in rec["message"]


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run("gen-data", "--config", cfg, "--out", tmp_path / "p.csv") == 2


def test_missing_data_file_is_data_error(capsys, tmp_path):
    code = _run("infer", "--prices", tmp_path / "nope.csv", "--holdings", tmp_path / "h.csv", "--out", tmp_path / "o.json")
    assert code == 3
    assert _last_error(capsys)["exit_code"] == 3


def test_gen_data_deterministic_and_stamped(tmp_path):
    for name in ("a", "b"):
        assert _run("gen-data", "--out", tmp_path / f"{name}.csv", "--n", 3, "--seed", 4, "--config", _days(tmp_path, 300)) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["run_config"]["params"]["seed"] == 4 and meta["run_config"]["params"]["days"] == 300
    with open(tmp_path / "a.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 300 * 3 and list(rows[0]) == ["date", "ticker", "close"]


def _days(tmp_path, days):
    p = tmp_path / f"days{days}.json"
    p.write_text(json.dumps({"days": days}))
    return p


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"days": 40, "n": 4, "seed": 1}))
    assert _run("gen-data", "--config", cfg, "--n", 2, "--out", tmp_path / "p.csv") == 0
    params = json.loads((tmp_path / "p.csv.meta.json").read_text())["run_config"]["params"]
    assert params["n"] == 2 and params["days"] == 40 and params["seed"] == 1


@pytest.fixture(scope="module")
def round_trip(tmp_path_factory):
    d = tmp_path_factory.mktemp("rt")
    assert _run("gen-data", "--out", d / "p.csv", "--holdings", d / "h.csv", "--seed", 0) == 0
    cfg = d / "infer.json"
    cfg.write_text(json.dumps({"r0": 0.02}))
    assert _run("infer", "--prices", d / "p.csv", "--holdings", d / "h.csv", "--config", cfg, "--out", d / "profile.json") == 0
    return d


def test_infer_profile_layout(round_trip):
    doc = json.loads((round_trip / "profile.json").read_text())
    assert set(doc) == {"run_config", "estimates", "quarterly_estimates", "target"}
    for est in doc["estimates"]:
        assert set(est) == {"date", "r", "c", "z", "residual", "flags"}
        assert est["r"] > 0
    t = doc["target"]
    assert len(t["quarterly"]) <= 4
    assert t["annualized_from_quarterly"] == pytest.approx(np.prod(1 + np.array(t["quarterly"])) - 1, abs=1e-15)
    assert t["ensemble"] == pytest.approx(0.5 * (t["annualized_from_quarterly"] + t["yearly"]), abs=1e-15)


def test_infer_round_trip_risk_tolerance(round_trip):
    doc = json.loads((round_trip / "profile.json").read_text())
    truth = json.loads((round_trip / "h.csv.truth.json").read_text())["truth"]
    assert len(doc["estimates"]) == len(truth)
    for est, tr in zip(doc["estimates"], truth):
        assert est["r"] == pytest.approx(tr["r"], rel=1e-3)


def test_infer_round_trip_portfolio_return(round_trip):
    doc = json.loads((round_trip / "profile.json").read_text())
    truth = json.loads((round_trip / "h.csv.truth.json").read_text())["truth"]
    errors = [abs(est["z"] - tr["z"]) for est, tr in zip(doc["estimates"], truth)]
    assert max(errors) <= 1e-3, f"z errors {np.round(errors, 4).tolist()}"


def test_train_backtest_eval_pipeline(tmp_path):
    prices = tmp_path / "p.csv"
    assert _run("gen-data", "--out", prices, "--n", 4, "--seed", 2, "--config", _days(tmp_path, 900)) == 0
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"episodes": 2, "hidden": [8, 8], "batch_size": 8, "grid": [{"horizon": 30}]}))
    pol = tmp_path / "pol.json"
    assert _run("train", "--prices", prices, "--out", pol, "--n", 3, "--portfolios", 3, "--config", grid, "--target", 0.05) == 0
    saved = json.loads(pol.read_text())
    assert saved["run_config"]["params"]["seed"] == 0 and saved["leaderboard"][0]["rank"] == 1
    assert (tmp_path / "pol.json.log.csv").exists()
    out = tmp_path / "eval.json"
    assert _run("eval-policy", "--prices", prices, "--policy", pol, "--out", out, "--portfolios", 3) == 0
    assert json.loads(out.read_text())["summary"]["portfolios"] == 3
    bt = tmp_path / "bt.json"
    bt_cfg = tmp_path / "bt_cfg.json"
    bt_cfg.write_text(json.dumps({"episodes": 1, "hidden": [8, 8], "batch_size": 8, "grid": [{"horizon": 20}], "val_portfolios": 2}))
    args = ("backtest", "--prices", prices, "--n", 3, "--portfolios", 3, "--window", 1, "--config", bt_cfg, "--target", 0.05)
    assert _run(*args, "--out", bt) == 0
    assert _run(*args, "--out", tmp_path / "bt2.json") == 0
    doc1, doc2 = json.loads(bt.read_text()), json.loads((tmp_path / "bt2.json").read_text())
    doc2["run_config"]["params"]["out"] = doc1["run_config"]["params"]["out"]
    assert doc1 == doc2
    assert set(doc1["windows"][0]["strategies"]) == {"ipo-drl", "buy-and-hold", "quarterly-mv"}
    assert _run("eval-policy", "--prices", prices, "--policy", pol, "--out", out, "--n", 4) == 2
