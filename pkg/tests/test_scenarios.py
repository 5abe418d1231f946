import json
import time

import pytest

from twistorlab.cli import main
from twistorlab.errors import ConfigError
from twistorlab.scenarios import (REGISTRY, ScenarioConfig, ScenarioError, default_suite_dir,
                                  run_all, run_scenario)

ALL_IDS = ["scattering-involution", "euclid-chord", "glancing-identity", "jacobi-fd",
           "boundary-determination", "dalpha-identities", "conformal-conjugation", "time-change",
           "rkc-suite", "moebius-rigidity", "twistor-catalog", "invariant-extension",
           "connection-difference"]


def test_registry_complete():
    assert list(REGISTRY) == ALL_IDS
    shipped = sorted(p.name for p in default_suite_dir().glob("*.json"))
    assert len(shipped) == len(ALL_IDS)


# ---------------------------------------------------------------- config

def test_unknown_scenario_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig("no-such-scenario")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_json('{"scenario": "nope"}')


@pytest.mark.parametrize("d", [{"scenario": "euclid-chord", "colour": 1},
                               {"scenario": "euclid-chord", "grid": [0, 4]},
                               {"scenario": "euclid-chord", "tol": -1},
                               {"scenario": "euclid-chord", "metric": "warp:1"},
                               {"scenario": "euclid-chord", "lambda": "spin"},
                               {"scenario": "euclid-chord", "params": {"gap": 1}},
                               {"grid": [2, 2]}])
def test_bad_configs_rejected(d):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(d)


def test_config_json_round_trip(tmp_path):
    cfg = ScenarioConfig.from_dict({"scenario": "boundary-determination", "metric": "zero",
                                    "lambda": "zero", "grid": [4, 4], "seed": 3,
                                    "params": {"gap": 0.01}})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = ScenarioConfig.from_json(path)
    assert again == cfg and again.grid == (4, 4) and again.metric == ["zero"]
    assert ScenarioConfig.from_json(json.dumps(cfg.to_dict())) == cfg


def test_resolved_fills_defaults():
    rc = ScenarioConfig("time-change", params={"probes": 3}).resolved()
    assert rc.tol == 1e-4 and rc.params["probes"] == 3 and rc.params["gap"] == 1e-4


# ---------------------------------------------------------------- runs

def test_involution_zero_metric_example(tmp_path):
    t0 = time.perf_counter()
    rep = run_scenario(ScenarioConfig("scattering-involution", metric=["zero"], grid=(64, 64),
                                      out=str(tmp_path)))
    assert time.perf_counter() - t0 < 10
    assert rep.passed and rep.metrics["max_deviation"] < 1e-6
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["passed"] and "runtime_s" in data and "timestamp" in data["provenance"]
    assert (tmp_path / "scattering-zero.csv").read_text().startswith("beta,gamma,beta_out")


def test_moebius_b_zero_extendable(tmp_path):
    rep = run_scenario(ScenarioConfig("moebius-rigidity", out=str(tmp_path),
                                      params={"draws": 20, "zero_fraction": 1.0}))
    assert rep.passed and rep.metrics["extendable"] == 20


def test_boundary_determination_gap(tmp_path):
    rep = run_scenario(ScenarioConfig("boundary-determination", grid=(6, 6), out=str(tmp_path),
                                      params={"sigma_prime": "linreal:0.1"}))
    gap = next(a for a in rep.assertions if a.name == "gap")
    assert rep.passed and gap.value > 1e-3


def test_every_assertion_names_an_invariant(tmp_path):
    rep = run_scenario(ScenarioConfig("rkc-suite", out=str(tmp_path)))
    assert rep.assertions and all(a.invariant for a in rep.assertions)


def test_plots_written(tmp_path):
    rep = run_scenario(ScenarioConfig("euclid-chord", grid=(6, 5), plots=True, out=str(tmp_path)))
    assert rep.plots == ["chord-error.svg"]
    assert (tmp_path / "chord-error.svg").read_text().lstrip().startswith("<?xml")


def test_numeric_errors_annotated(tmp_path):
    # lambda = const:1.5 makes the boundary non-convex at one glancing side
    cfg = ScenarioConfig("glancing-identity", metric=["zero"], lam="const:1.5", grid=(1, 1),
                         out=str(tmp_path), params={"thermostats": []})
    with pytest.raises(ScenarioError, match=r"^\[glancing-identity\] ConvexityViolated"):
        run_scenario(cfg)


def test_canonical_reports_identical(tmp_path):
    texts = []
    for k in range(2):
        cfg = ScenarioConfig("twistor-catalog", seed=5, canonical=True, out=str(tmp_path / str(k)),
                             params={"points": 50})
        run_scenario(cfg)
        texts.append((tmp_path / str(k) / "report.json").read_bytes())
    assert texts[0] == texts[1]
    assert b"runtime_s" not in texts[0] and b"timestamp" not in texts[0]


# ---------------------------------------------------------------- suites

def test_empty_suite(tmp_path, capsys):
    (tmp_path / "cfg").mkdir()
    assert run_all(tmp_path / "cfg", tmp_path / "out") == 0
    assert json.loads((tmp_path / "out" / "summary.json").read_text()) == []


def test_broken_tolerance_suite(tmp_path):
    cfgs = tmp_path / "cfg"
    cfgs.mkdir()
    (cfgs / "a.json").write_text(json.dumps({"scenario": "connection-difference",
                                             "params": {"samples": 20}}))
    (cfgs / "b.json").write_text(json.dumps({"scenario": "euclid-chord", "grid": [3, 3],
                                             "tol": 1e-30}))
    (cfgs / "c.json").write_text('{"scenario": "missing"}')
    assert run_all(cfgs, tmp_path / "out", echo=None) == 1
    summary = {r["config"]: r for r in json.loads((tmp_path / "out" / "summary.json").read_text())}
    assert summary["a"]["passed"]
    assert not summary["b"]["passed"] and summary["b"]["failed"]
    assert summary["c"]["error"].startswith("ConfigError")


def test_run_all_rejects_missing_dir(tmp_path):
    with pytest.raises(ConfigError):
        run_all(tmp_path / "absent")


# ---------------------------------------------------------------- CLI

def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(i in out for i in ALL_IDS)


def test_cli_run(tmp_path, capsys):
    code = main(["run", "euclid-chord", "--grid", "4x3", "--out", str(tmp_path), "--canonical"])
    assert code == 0
    assert "euclid-chord: PASS" in capsys.readouterr().out
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["provenance"]["config"]["grid"] == [4, 3]


def test_cli_run_failure_exit_code(tmp_path):
    assert main(["run", "euclid-chord", "--grid", "2x2", "--tol", "1e-30", "--out", str(tmp_path)]) == 1


def test_cli_param_and_bad_metric(tmp_path, capsys):
    assert main(["run", "moebius-rigidity", "--param", "draws=5", "--out", str(tmp_path)]) == 0
    assert main(["run", "euclid-chord", "--metric", "warp:2", "--out", str(tmp_path)]) == 2
    assert "twistorlab:" in capsys.readouterr().err


def test_cli_suite(tmp_path):
    cfgs = tmp_path / "cfg"
    cfgs.mkdir()
    (cfgs / "a.json").write_text(json.dumps({"scenario": "rkc-suite"}))
    assert main(["suite", str(cfgs), "--out", str(tmp_path / "out")]) == 0
