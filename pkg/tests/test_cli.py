import json

import pytest

from slag.cli import main
from slag.runner import RunOptions, payload, run_scenario
from slag.scenarios import ConfigError, Scenario, catalog, load

CATALOG = {"toric_p3", "g24_quadric", "kn_cp1_ricciflat", "kn_cp1_compact", "fermat_quintic_l0",
           "quintic_l1", "g24_hypersurface", "ci_two_cubics"}


def small_toric(tmp_path, **knobs):
    data = json.loads(json.dumps(load("toric_p3").data))
    data["name"] = "toric_small"
    data["knobs"].update({"samples": 20, "orbits": 3, "orbit_points": 4, "fibers": 2, "steps": 15})
    data["knobs"].update(knobs)
    path = tmp_path / "toric_small.json"
    path.write_text(json.dumps(data))
    return path


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8
    assert {ln.split()[0] for ln in lines} == CATALOG


def test_catalog_entries_valid():
    assert set(catalog()) == CATALOG
    assert load("fermat_quintic").name == "fermat_quintic_l0"
    assert load("catalog/g24_quadric.json").name == "g24_quadric"


def test_describe(capsys):
    assert main(["describe", "g24_quadric"]) == 0
    out = capsys.readouterr().out
    assert "beta map" in out and "period" in out


def test_describe_unknown(capsys):
    assert main(["describe", "nosuch"]) == 2
    assert "nosuch" in capsys.readouterr().err


def test_missing_weights(tmp_path, capsys):
    data = load("toric_p3").data.copy()
    del data["weights"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path)]) == 2
    assert "weights" in capsys.readouterr().err


@pytest.mark.parametrize("mutation, field", [
    (lambda d: d["knobs"].update(m=1000), "knobs.m"),
    (lambda d: d.update(plan=["verify", "dance"]), "plan"),
    (lambda d: d.update(schema="slag-scenario/9"), "schema"),
    (lambda d: d.update(eta=[[1.0, [1, 1, 1]]]), "eta"),
    (lambda d: d["components"][0].update(point=[[1, 0]]), "components[0]"),
])
def test_config_errors(tmp_path, capsys, mutation, field):
    data = json.loads(json.dumps(load("fermat_quintic_l0").data))
    data["eta"] = [[1.0, [1, 1, 1, 1, 1]]]
    mutation(data)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path)]) == 2
    assert field in capsys.readouterr().err


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["run", str(path)]) == 2


def test_scenario_requires_name():
    with pytest.raises(ConfigError, match="name"):
        Scenario.from_dict({"ambient": {"kind": "projective", "n": 3}, "plan": []})


def test_no_chain_exit_3(capsys):
    assert main(["run", "catalog/fermat_quintic.json", "--t", "1.0", "--no-chain"]) == 3
    assert "chain" in capsys.readouterr().err


def test_bad_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SLAG_THREADS", "many")
    assert main(["run", str(small_toric(tmp_path))]) == 2


def test_run_writes_report_and_csv(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(small_toric(tmp_path)), "--out", str(out), "--seed", "7"]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text
    report = json.loads((out / "toric_small_report.json").read_text())
    assert report["schema"] == "slag-report/1"
    assert report["seed"] == 7
    assert report["tool"]["name"] == "slag"
    assert {c["name"] for c in report["checks"]} >= {"g_constancy", "fiber_level", "fiber_reversal"}
    for c in report["checks"]:
        assert {"value", "threshold", "passed"} <= set(c)
    csv_lines = (out / "toric_small_fiber00.csv").read_text().splitlines()
    assert csv_lines[0].startswith("index,x0_re,x0_im")
    assert len(csv_lines) == 1 + 16


def test_determinism_across_runs_and_threads(tmp_path, monkeypatch):
    sc = load(str(small_toric(tmp_path)))
    a = run_scenario(sc, RunOptions(seed=3, out=tmp_path / "a", threads=1))
    b = run_scenario(sc, RunOptions(seed=3, out=tmp_path / "b", threads=2))
    assert json.dumps(payload(a), sort_keys=True) == json.dumps(payload(b), sort_keys=True)
    for name in ("toric_small_fiber00.csv", "toric_small_fiber01.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = run_scenario(sc, RunOptions(seed=4))
    assert payload(c)["checks"] != payload(a)["checks"]


def test_threads_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SLAG_THREADS", "2")
    out = tmp_path / "o"
    assert main(["run", str(small_toric(tmp_path)), "--out", str(out)]) == 0
    report = json.loads((out / "toric_small_report.json").read_text())
    assert report["runtime"]["threads"] == 2


def test_failing_check_exit_1(tmp_path):
    # A tolerance far below rounding makes residual checks fail.
    assert main(["run", str(small_toric(tmp_path)), "--tol", "1e-30"]) == 1


def test_sharpness_baseline_recorded(tmp_path):
    data = json.loads(json.dumps(load("kn_cp1_compact").data))
    data["name"] = "kn_small"
    data["plan"] = ["boundary"]
    data["knobs"].update(steps=40, seeds=data["knobs"]["seeds"][:1])
    path = tmp_path / "kn.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "o"
    first = run_scenario(load(str(path)), RunOptions(seed=1, out=out))
    assert "sharpness_regression" not in {c["name"] for c in first["checks"]}
    assert "kn_small/sharpness_gap" in json.loads((out / "baselines.json").read_text())
    second = run_scenario(load(str(path)), RunOptions(seed=1, out=out))
    reg = [c for c in second["checks"] if c["name"] == "sharpness_regression"]
    assert reg and reg[0]["passed"]
