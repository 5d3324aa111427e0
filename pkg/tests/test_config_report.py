import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rflab import report as rp
from rflab.config import default_tree, load_config, validate, with_overrides
from rflab.errors import ConfigError
from rflab.suites import suite_names
from rflab.svg import line_plot

KNOWN = suite_names()


def write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return p


def test_defaults_validate():
    cfg = load_config(None, KNOWN)
    assert cfg.grid == 512 and cfg.suites == ["all"]
    assert cfg.flow_spec().t_max == 0.3


def test_errors_name_the_field_and_line(tmp_path):
    with pytest.raises(ConfigError, match=r"grid: must be an integer >= 32 \(line 2\)"):
        load_config(write(tmp_path, "seed: 1\ngrid: 8\n"), KNOWN)
    with pytest.raises(ConfigError, match=r"suites.1: unknown suite 'nope' \(line 3\)"):
        load_config(write(tmp_path, "suites:\n  - hn\n  - nope\n"), KNOWN)
    with pytest.raises(ConfigError, match=r"bogus: unknown key \(line 1\)"):
        load_config(write(tmp_path, "bogus: 1\n"), KNOWN)
    with pytest.raises(ConfigError, match=r"pathspace.paths"):
        load_config(write(tmp_path, "pathspace:\n  paths: 10\n"), KNOWN)


def test_malformed_yaml_reports_the_position(tmp_path):
    with pytest.raises(ConfigError, match=r"malformed YAML .*\(line \d+, column \d+\)"):
        load_config(write(tmp_path, "seed: 1\ngrid: [1, 2\nout: x\n"), KNOWN)


def test_top_level_must_be_a_mapping(tmp_path):
    with pytest.raises(ConfigError, match="mapping"):
        load_config(write(tmp_path, "- 1\n- 2\n"), KNOWN)


def test_hash_ignores_output_only_keys():
    base = validate({}, KNOWN)
    assert with_overrides(base, KNOWN, out="elsewhere", workers=4).hash == base.hash
    assert with_overrides(base, KNOWN, seed=base.seed + 1).hash != base.hash
    assert len(base.hash) == 12


def test_comma_separated_suites():
    cfg = validate({"suites": "hn, score"}, KNOWN)
    assert cfg.suites == ["hn", "score"]


def test_tolerance_multipliers():
    cfg = validate({"tol_scale": 2.0, "tolerances": {"bobkov": 3.0}}, KNOWN)
    assert cfg.tol("bobkov", 1e-3) == pytest.approx(6e-3)
    assert cfg.tol("hn", 1e-3) == pytest.approx(2e-3)


@given(st.integers(0, 2 ** 64 - 1))
def test_hash_is_stable_across_reloads(seed):
    a = validate({"seed": seed}, KNOWN)
    b = validate(json.loads(json.dumps(a.tree)), KNOWN)
    assert a.hash == b.hash


def test_record_pass_semantics():
    assert rp.leq("a", 1.0, 1.0).passed
    assert not rp.leq("a", 1.0 + 1e-9, 1.0).passed
    assert rp.leq("a", 1.0 + 1e-9, 1.0, tol=1e-8).passed
    assert rp.geq("a", 2.0, 1.0).margin == 1.0
    assert rp.close("a", 1.01, 1.0, 0.02, relative=True).passed
    assert not rp.close("a", 1.03, 1.0, 0.02, relative=True).passed
    assert not rp.flag("a", False).passed
    assert not rp.Record("a", 0.0, 0.0, math.nan, 1.0).passed


def test_records_serialize_without_nan():
    r = rp.leq("a", math.inf, 1.0)
    d = r.to_dict()
    assert d["lhs"] is None and d["passed"] is False
    rp.dumps({"r": d})  # allow_nan=False would raise


def _doc(margin, passed=True):
    rec = {"name": "x", "margin": margin, "passed": passed}
    return {"schema": rp.REPORT_SCHEMA, "config_hash": "abc", "timestamp": "t",
            "suites": [{"suite": "s", "records": [rec]}]}


def test_diff_reports():
    assert rp.diff_reports(_doc(0.1), _doc(0.1)) == []
    assert rp.diff_reports(_doc(0.1), _doc(0.1 + 1e-9), tol=1e-6) == []
    assert rp.diff_reports(_doc(0.1), _doc(0.2))
    assert any("passed" in line for line in rp.diff_reports(_doc(0.1), _doc(-0.1, False)))
    other = _doc(0.1)
    other["suites"][0]["records"][0]["name"] = "y"
    lines = rp.diff_reports(_doc(0.1), other)
    assert "added s/y" in lines and "removed s/x" in lines


def test_svg_is_deterministic_and_escaped():
    a = line_plot("a < b", [0, 1, 2], [1.0, math.nan, 3.0])
    assert a == line_plot("a < b", [0, 1, 2], [1.0, math.nan, 3.0])
    assert a.startswith("<svg") and "a &lt; b" in a


def test_default_tree_lists_every_known_key():
    assert set(default_tree()) >= {"seed", "grid", "steps", "tol_scale", "out", "workers", "suites",
                                   "tolerances", "pathspace", "flow"}
