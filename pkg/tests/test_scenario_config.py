import copy

import numpy as np
import pytest
import yaml

from conftest import MPOR
from pfl import GBM, ConfigurationError, load_scenario, serialize
from pfl.scenario_config import apply_overrides, parse_scenario, shipped_scenarios

SHIPPED = shipped_scenarios()


def test_corpus_complete():
    assert set(SHIPPED) == {"gbm_calendar_spread", "gbm_quantile_im", "usd_irs_uncollat", "usd_irs_collat", "usd_irs_im_netting"}


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_shipped_scenarios_load(name):
    s = load_scenario(SHIPPED[name])
    assert s.name == name and len(s.hash) == 64
    assert load_scenario(SHIPPED[name]).hash == s.hash
    if s.csa is not None:
        for t in s.grid.points:
            assert t - s.csa.mpor_years < 0 or s.sim_grid.find(t - s.csa.mpor_years) is not None
    for t in s.grid.points:
        assert s.sim_grid.find(t) is not None


def test_calendar_spread_scenario_parameters():
    s = load_scenario(SHIPPED["gbm_calendar_spread"])
    assert isinstance(s.model, GBM) and s.model.drift == 0.01 and s.model.vol == 0.20
    assert s.csa.mpor_days == 10 and s.csa.mpor_years == pytest.approx(MPOR)
    assert s.grid.find(0.5) is not None


def test_irs_defaults():
    s = load_scenario(SHIPPED["usd_irs_uncollat"])
    assert s.portfolio.trades[0].notional == 100e6
    assert s.credit.hazard == pytest.approx(0.25)
    assert s.protection_profile().y.max() == pytest.approx(6e6)
    for t in s.portfolio.flow_times:
        assert s.grid.find(t) is not None and s.grid.find(t + MPOR / 2) is not None or t + MPOR / 2 > 10


def _doc(name="usd_irs_collat"):
    return yaml.safe_load(SHIPPED[name].read_text())


def test_q_one_rejected():
    doc = _doc()
    doc["metrics"][0]["q"] = [1.0]
    with pytest.raises(ConfigurationError, match="metrics.0.q.0"):
        parse_scenario(doc, SHIPPED["usd_irs_collat"])


def test_unknown_key_rejected_with_path():
    doc = _doc()
    doc["csa"]["threshhold"] = 0.0
    with pytest.raises(ConfigurationError, match="csa"):
        parse_scenario(doc, SHIPPED["usd_irs_collat"])
    doc = _doc()
    doc["model"]["vol"] = 0.01
    with pytest.raises(ConfigurationError, match="model"):
        parse_scenario(doc, SHIPPED["usd_irs_collat"])


def test_missing_file(tmp_path):
    doc = _doc("usd_irs_im_netting")
    doc["initial_margin"]["schedule_file"] = "nope.csv"
    with pytest.raises(ConfigurationError, match="schedule_file"):
        parse_scenario(doc, tmp_path / "x.scenario")


def test_semantic_checks():
    doc = _doc("usd_irs_collat")
    doc["metrics"] = [{"kind": "aPFL", "q": [0.95]}]
    with pytest.raises(ConfigurationError, match="credit"):
        parse_scenario(doc, SHIPPED["usd_irs_collat"])
    doc = _doc("usd_irs_uncollat")
    doc["initial_margin"] = {"mode": "schedule"}
    with pytest.raises(ConfigurationError, match="csa"):
        parse_scenario(doc, SHIPPED["usd_irs_uncollat"])
    doc = _doc("usd_irs_collat")
    doc["deltas"] = {"convention": "custom", "bank_business_days": {"tf": 0, "csa": 12, "sf": 0, "im": 0},
                     "counterparty_business_days": {"tf": 10, "csa": 10, "sf": 10, "im": 10}}
    with pytest.raises(ConfigurationError, match="deltas.bank"):
        parse_scenario(doc, SHIPPED["usd_irs_collat"])
    doc = _doc("gbm_calendar_spread")
    doc["plot"]["distribution_date_years"] = 0.51
    with pytest.raises(ConfigurationError, match="plot"):
        parse_scenario(doc, SHIPPED["gbm_calendar_spread"])


def test_hash_ignores_order_and_whitespace(tmp_path):
    doc = _doc()
    a = tmp_path / "a.scenario"
    b = tmp_path / "b.scenario"
    a.write_text(yaml.safe_dump(doc, sort_keys=True))
    reordered = dict(reversed(list(doc.items())))
    b.write_text("\n\n" + yaml.safe_dump(reordered, sort_keys=False, indent=4) + "\n# trailing comment\n")
    assert load_scenario(a).hash == load_scenario(b).hash
    doc["seed"] += 1
    a.write_text(yaml.safe_dump(doc))
    assert load_scenario(a).hash != load_scenario(b).hash


def test_hash_tracks_referenced_file_content(tmp_path):
    doc = _doc("usd_irs_im_netting")
    (tmp_path / "im_schedule.csv").write_text((SHIPPED["usd_irs_im_netting"].parent / "im_schedule.csv").read_text())
    f = tmp_path / "s.scenario"
    f.write_text(yaml.safe_dump(doc))
    h1 = load_scenario(f).hash
    assert h1 == load_scenario(SHIPPED["usd_irs_im_netting"]).hash
    (tmp_path / "im_schedule.csv").write_text("asset_class,bucket_low_years,bucket_high_years,percent\n"
                                              "interest_rate,0,inf,5\n")
    assert load_scenario(f).hash != h1


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_round_trip(name, tmp_path):
    s = load_scenario(SHIPPED[name])
    f = tmp_path / "copy.scenario"
    f.write_text(serialize(s))
    back = load_scenario(f)
    assert back == s
    assert back.grid == s.grid and back.sim_grid == s.sim_grid


def test_overrides():
    s = load_scenario(SHIPPED["usd_irs_collat"], ["n_paths=1000", "seed=7", "csa.flow_netting=true",
                                                   "portfolio.trades.0.notional=5e7"])
    assert s.n_paths == 1000 and s.seed == 7 and s.csa.flow_netting
    assert s.portfolio.trades[0].notional == 5e7
    with pytest.raises(ConfigurationError):
        load_scenario(SHIPPED["usd_irs_collat"], ["n_paths"])
    with pytest.raises(ConfigurationError, match="n_paths"):
        load_scenario(SHIPPED["usd_irs_collat"], ["n_paths=-3"])
    with pytest.raises(ConfigurationError):
        apply_overrides({"a": [1]}, ["a.5=2"])


def test_output_dir_env(monkeypatch, tmp_path):
    base = load_scenario(SHIPPED["gbm_quantile_im"])
    monkeypatch.setenv("PFL_OUTPUT_DIR", str(tmp_path))
    s = load_scenario(SHIPPED["gbm_quantile_im"])
    assert s.output_dir == tmp_path and s.hash == base.hash


def test_bad_yaml(tmp_path):
    f = tmp_path / "x.scenario"
    f.write_text("name: [unclosed\n")
    with pytest.raises(ConfigurationError):
        load_scenario(f)
    f.write_text("- just\n- a list\n")
    with pytest.raises(ConfigurationError):
        load_scenario(f)
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "missing.scenario")
