import json
import math

import pytest

import muce


def test_version():
    assert muce.__version__ == "0.1.0"


def test_prior_correlation_presets():
    same_i, same_d, neither = muce.prior_correlation("setting1")
    assert (same_i, same_d, neither) == pytest.approx((0.6, 0.6, 0.4), abs=1e-12)
    same_i, _, neither = muce.prior_correlation("setting2")
    assert same_i == pytest.approx(19 / 21, abs=1e-12)
    assert neither == pytest.approx(18 / 21, abs=1e-12)


def test_prior_correlation_overrides():
    base = muce.prior_correlation({"preset": "setting1", "sigma0_sq": 1.0})
    assert base == muce.prior_correlation("setting1")
    tight = muce.prior_correlation({"preset": "setting4"})
    assert tight[2] < base[2]


def test_simon():
    assert muce.simon_search(0.2, 0.35, 0.1, 0.3) == (2, 13, 8, 29)
    assert muce.simon_search(0.1, 0.3, 0.05, 0.2, "minimax") == (1, 15, 5, 25)
    null = muce.two_stage_error_rates((2, 13, 8, 29), 0.2)
    alt = muce.two_stage_error_rates((2, 13, 8, 29), 0.35)
    assert null["reject_prob"] <= 0.1
    assert alt["reject_prob"] >= 0.7
    assert null["pet"] == pytest.approx(0.5017, abs=1e-4)
    assert muce.fwer_independent(0.1, 4) == pytest.approx(0.3439, abs=1e-12)


def test_fit_single_dose():
    r = muce.fit([10, 10, 10, 10], [1, 5, 6, 3], 0.2, burn_in=500, n_keep=2000, seed=3)
    assert len(r["pr_h1"]) == 4 and len(r["pr_h1"][0]) == 1
    pr = [row[0] for row in r["pr_h1"]]
    assert pr[0] < pr[3] < pr[1] < pr[2] + 0.02
    assert all(0.0 < row[0] < 1.0 for row in r["est_p"])
    again = muce.fit([10, 10, 10, 10], [1, 5, 6, 3], 0.2, burn_in=500, n_keep=2000, seed=3)
    assert again == r


def test_fit_rejects_bad_data():
    with pytest.raises(ValueError):
        muce.fit([10], [12], 0.2)
    with pytest.raises(muce.ConfigError) as err:
        muce.fit([10], [1], 0.2, hyper="setting9")
    assert isinstance(err.value, ValueError)


def test_run_records(tmp_path):
    cfg = {"design_simon": {"p0": 0.2, "p1": 0.35, "alpha": 0.1, "beta": 0.3,
                            "criterion": "optimal", "arms": 4}}
    record, files = muce.run("design-simon", cfg, out=tmp_path)
    assert record["command"] == "design-simon"
    d = record["result"]["designs"][0]
    assert d["fwer"] == pytest.approx(1 - (1 - d["null"]["reject_prob"]) ** 4)
    assert len(files) == 1
    assert json.loads(open(files[0]).read()) == record


def test_run_simulate_reproducible():
    cfg = {
        "seed": 9,
        "reps": 30,
        "design": {
            "method": "simon",
            "layout": {"indications": 4, "pi0": 0.2},
            "simon": {"r1": 2, "n1": 13, "r": 8, "N": 29},
        },
        "simulate": {"scenarios": ["table3-scenario1"]},
    }
    a, _ = muce.run("simulate", cfg)
    b, _ = muce.run("simulate", json.dumps(cfg))
    assert a["result"] == b["result"]
    report = a["result"]["reports"][0]
    assert report["n_reps"] == 30
    assert all(not math.isnan(x) for x in report["rejection_rate"])


def test_run_config_errors():
    with pytest.raises(muce.ConfigError) as err:
        muce.run("correlations", {"correlations": {"hyper": "setting1"}, "bogus": 1})
    assert err.value.args[1] == "bogus"
    with pytest.raises(muce.ConfigError):
        muce.run("simulate", {"simulate": {"scenarios": ["table3-scenario1"]}})
