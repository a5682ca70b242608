import json

import numpy as np
import pytest
import yaml

from varsobolev.cli import main
from varsobolev.config import config_schema, load_config, parse_config
from varsobolev.errors import ConfigError
from varsobolev.families import bump_family, draw_bumps, exponent_values
from varsobolev.reports import SuiteResult, make_report
from varsobolev.suites import emit_report, from_json, run_suite, to_csv, to_json

BASE = {
    "dimension": 2,
    "grid": {"origin": [-1, -1], "extent": [2, 2], "resolution": [32, 32]},
    "exponent": {"kind": "sine", "base": 1.5, "amplitude": 0.2, "frequency": [2.0, 1.5], "phase": 0.5},
    "functions": {"count": 2, "anisotropy": [0.6, 0.9]},
    "family": {"count": 2, "anisotropy": [0.6, 0.9]},
    "k_sweep": [1, 2, 4],
    "seed": 3,
}


def cfg_with(**changes):
    d = json.loads(json.dumps(BASE))
    for dotted, value in changes.items():
        node = d
        keys = dotted.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return d


@pytest.mark.parametrize(
    "changes, path",
    [
        ({"exponent__base": 2.0}, "exponent"),
        ({"exponent__base": 0.9, "exponent__amplitude": 0.0}, "exponent"),
        ({"s": 2.0}, "s"),
        ({"k_sweep": [1, 0.5]}, "k_sweep.1"),
        ({"grid__resolution": [32]}, "grid.resolution"),
        ({"exponent__kind": "linear"}, "exponent"),
        ({"typo_key": 1}, "typo_key"),
        ({"ot__method": "magic"}, "ot.method"),
    ],
)
def test_config_rejections_carry_paths(changes, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg_with(**changes))
    assert exc.value.path == path


def test_p_plus_checked_on_actual_nodes():
    # the linear exponent stays below n inside the box even though base + |gradient| would not
    ok = cfg_with(exponent={"kind": "linear", "base": 1.5, "gradient": [0.4, 0.0]})
    parse_config(ok)
    bad = cfg_with(exponent={"kind": "linear", "base": 1.5, "gradient": [0.6, 0.0]})
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_load_yaml_and_json(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(BASE))
    (tmp_path / "c.json").write_text(json.dumps(BASE))
    assert load_config(tmp_path / "c.yaml") == load_config(tmp_path / "c.json")
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_schema_forbids_extra_keys():
    assert config_schema()["additionalProperties"] is False


def test_exponent_kinds():
    cfg = parse_config(BASE)
    g = cfg.build_grid()
    v = exponent_values(g, cfg.exponent)
    assert 1.3 <= v.min() and v.max() <= 1.7
    bump = cfg_with(exponent={"kind": "bump", "base": 1.4, "amplitude": 0.3, "center": [0, 0], "radius": 0.5})
    vb = exponent_values(g, parse_config(bump).exponent)
    assert vb.max() <= 1.7 + 1e-12 and vb.min() == 1.4


def test_families_are_seeded_and_inside_the_box():
    cfg = parse_config(BASE)
    g = cfg.build_grid()
    a = bump_family(g, cfg.family, 7)
    b = bump_family(g, cfg.family, 7)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    for c, r, _ in draw_bumps(g, cfg.family, np.random.default_rng(1)):
        assert np.all(c - r >= -1) and np.all(c + r <= 1)


def test_holder_suite_self_conjugate():
    d = cfg_with(dimension=3, grid={"origin": [-1] * 3, "extent": [2] * 3, "resolution": [12] * 3})
    d["exponent"] = {"kind": "constant", "base": 2.0}
    d["functions"] = {"count": 10}
    d["family"] = {"count": 10}
    res = run_suite(parse_config(d), "holder")
    assert len(res.reports) == 10 and res.passed


def test_scaling_suite_rows(tmp_path):
    d = cfg_with(functions={"count": 1})
    res = run_suite(parse_config(d), "scaling")
    scal = [r for r in res.reports if r.kind == "scaling"]
    assert sum(len(r.sandwiches) for r in scal) == 9
    k1 = next(r for r in scal if r.k == 1.0)
    assert all(s.lower == s.measured == s.upper for s in k1.sandwiches)
    assert res.passed


def test_errors_are_captured_per_report():
    d = cfg_with(s=4.0, functions={"count": 2, "centers": [[0.0, 0.0], [0.0, 0.0]], "radii": [0.5, 0.5]})
    cfg = parse_config(d)
    # break one input after validation so the check itself raises
    cfg = cfg.model_copy(update={"s": 1.5})
    res = run_suite(cfg, "log-lemma")
    assert len(res.reports) == 2
    assert all(r.error and "invalid-integrability-exponent" in r.error for r in res.reports)


def test_emit_round_trip_and_empty(tmp_path):
    empty = SuiteResult(suite="holder")
    emit_report(empty, tmp_path, ["json", "csv"])
    assert json.loads((tmp_path / "holder.json").read_text())["reports"] == []
    one = SuiteResult(suite="holder", reports=[make_report("holder[0]", 1.0, 2.0, 0.0)])
    assert to_csv(one).splitlines() == [
        "suite,name,lhs,rhs,margin,tolerance,pass",
        "holder,holder[0],1.0,2.0,1.0,0.0,true",
    ]
    res = run_suite(parse_config(cfg_with(functions={"count": 1}, family={"count": 1})), "all")
    back = from_json(to_json(res))
    assert back == res
    assert '"pass"' in to_json(res)


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(SuiteResult(suite="holder"), blocker / "sub")


def _write_cfg(tmp_path, d):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(d))
    return str(path)


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    path = _write_cfg(tmp_path, BASE)
    monkeypatch.setenv("VARSOBOLEV_OUT", str(tmp_path / "envout"))
    assert main(["verify", "holder", "--config", path, "--format", "csv"]) == 0
    assert (tmp_path / "envout" / "holder.csv").exists()
    bad = _write_cfg(tmp_path, cfg_with(s=1.0))
    assert main(["verify", "holder", "--config", bad]) == 2
    assert "config-error" in capsys.readouterr().err
    assert main(["verify", "holder", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_exit_one_on_failed_check(tmp_path, monkeypatch):
    import varsobolev.suites as suites

    failing = SuiteResult(suite="holder", reports=[make_report("holder[0]", 2.0, 1.0, 0.0)])
    monkeypatch.setattr(suites, "run_suite", lambda cfg, suite, jobs=1: failing)
    path = _write_cfg(tmp_path, BASE)
    assert main(["verify", "holder", "--config", path, "--out", str(tmp_path)]) == 1
    assert "false" in (tmp_path / "holder.csv").read_text()


def test_cli_schema(capsys):
    assert main(["schema"]) == 0
    assert "ExperimentConfig" in capsys.readouterr().out


def test_seed_override_changes_output(tmp_path):
    path = _write_cfg(tmp_path, BASE)
    main(["verify", "holder", "--config", path, "--out", str(tmp_path / "a"), "--format", "csv", "--seed", "1"])
    main(["verify", "holder", "--config", path, "--out", str(tmp_path / "b"), "--format", "csv", "--seed", "2"])
    assert (tmp_path / "a" / "holder.csv").read_text() != (tmp_path / "b" / "holder.csv").read_text()
