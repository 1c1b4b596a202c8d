import json

import pytest

import finslercut as fc
from finslercut import cli
from finslercut.errors import ScenarioError
from finslercut.scenario import (SCHEMA, builtin_scenario, run_scenario,
                                 summary_document)

TINY = {
    "name": "tiny",
    "manifold": {"type": "torus", "periods": [1.0, 1.0]},
    "metric": {"family": "euclidean"},
    "submanifold": {"family": "point", "point": [0.0, 0.0]},
    "grids": {"psi_count": 16, "horizon": 1.2},
    "tasks": ["validate", "cutlocus", "classify", "theorems"],
    "seed": 5,
}


def test_parse_valid_scenario():
    sc = fc.parse_scenario(json.dumps(TINY))
    assert sc.name == "tiny"
    assert sc.grids["psi_count"] == 16
    assert sc.tolerances["bisection"] == 1e-6   # default filled in


def test_parse_rejects_bad_json():
    with pytest.raises(ScenarioError):
        fc.parse_scenario("{not json")


def test_parse_reports_json_pointer():
    bad = dict(TINY, metric={"family": "hyperbolic"})
    with pytest.raises(ScenarioError) as err:
        fc.parse_scenario(json.dumps(bad))
    assert err.value.pointer == "/metric/family"
    assert "hyperbolic" in str(err.value)


def test_parse_rejects_unknown_key():
    bad = dict(TINY, extra=1)
    with pytest.raises(ScenarioError):
        fc.parse_scenario(json.dumps(bad))


def test_parse_rejects_bad_task():
    bad = dict(TINY, tasks=["cutlocus", "frobnicate"])
    with pytest.raises(ScenarioError) as err:
        fc.parse_scenario(json.dumps(bad))
    assert "/tasks/1" in str(err.value)


def test_builtin_registry():
    names = [n for n, _ in fc.list_builtin_scenarios()]
    assert len(names) == 8
    assert "torus-point" in names and "plane-ellipse" in names
    for n in names:
        sc = builtin_scenario(n)
        assert sc.name == n


def test_builtin_unknown_name():
    with pytest.raises(ScenarioError):
        builtin_scenario("does-not-exist")


def test_run_tiny_scenario(tmp_path):
    sc = fc.parse_scenario(json.dumps(TINY))
    bundle = run_scenario(sc, out_dir=tmp_path)
    assert not bundle.errors and not bundle.violations
    assert (tmp_path / "manifest.json").exists()
    assert (tmp_path / "tiny_summary.json").exists()
    assert (tmp_path / "tiny_cutlocus.csv").exists()
    assert (tmp_path / "tiny_cutlocus.svg").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 5
    assert "tiny_summary.json" in manifest["files"]


def test_run_is_deterministic():
    sc1 = fc.parse_scenario(json.dumps(TINY))
    sc2 = fc.parse_scenario(json.dumps(TINY))
    s1 = summary_document(run_scenario(sc1))
    s2 = summary_document(run_scenario(sc2))
    assert json.dumps(s1, sort_keys=True) == json.dumps(s2, sort_keys=True)


def test_schema_is_strict():
    assert SCHEMA["additionalProperties"] is False


def test_cli_list_exit_zero(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "torus-point" in out


def test_cli_validate(tmp_path, capsys):
    f = tmp_path / "sc.json"
    f.write_text(json.dumps(TINY))
    assert cli.main(["validate", str(f)]) == 0
    f.write_text(json.dumps(dict(TINY, metric={"family": "nope"})))
    assert cli.main(["validate", str(f)]) == 1


def test_cli_run_unknown_scenario_is_config_error(capsys):
    assert cli.main(["run", "no-such-builtin"]) == 1


def test_cli_run_tiny(tmp_path, capsys):
    f = tmp_path / "sc.json"
    f.write_text(json.dumps(TINY))
    code = cli.main(["run", str(f), "--out-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "cutlocus: ok" in out
