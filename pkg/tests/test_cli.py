import json
import subprocess
import sys

import pytest

from rflab import cli, suites
from rflab.flow_geometry import flow_from_json
from rflab.suites import Check


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_list_prints_every_suite_in_order(capsys):
    assert run("list") == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == suites.suite_names()


def test_list_filters_by_keyword(capsys):
    run("list", "localization")
    assert [l.split()[0] for l in capsys.readouterr().out.splitlines()] == ["hn"]
    run("list", "LOG-SOBOLEV")
    assert capsys.readouterr().out.startswith("functional")
    assert run("list", "no-such-topic") == 0
    assert capsys.readouterr().out == ""


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2
    assert run("run", "--suite", "nope") == 2
    assert "unknown suite" in capsys.readouterr().err


def test_malformed_config_exits_2_with_a_line(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: 1\ngrid: 8\n")
    assert run("run", "--config", p, "--out", tmp_path) == 2
    assert "(line 2)" in capsys.readouterr().err
    p.write_text("seed: [1\n")
    assert run("run", "--config", p) == 2
    assert "line" in capsys.readouterr().err


def test_run_writes_hashed_artifacts_reproducibly(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run", "--suite", "gaussian_model", "--out", a) == 0
    assert run("run", "--suite", "gaussian_model", "--out", b) == 0
    assert "PASS gaussian_model" in capsys.readouterr().out
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    report = next(a.glob("report-*.json"))
    h = report.stem.split("-", 1)[1]
    assert all(h in p.name for p in files)
    for rel in files:
        if rel.name.startswith("timing-"):
            continue
        ta, tb = (a / rel).read_text(), (b / rel).read_text()
        if rel.suffix == ".json":
            da, db = json.loads(ta), json.loads(tb)
            da.pop("timestamp"), db.pop("timestamp")
            assert da == db
        else:
            assert ta == tb
    assert json.loads(report.read_text())["config_hash"] == h
    assert run("report", "diff", report, next(b.glob("report-*.json"))) == 0


def test_violation_exits_1(tmp_path, monkeypatch, capsys):
    def broken(o):
        o.leq("one below zero", 1.0, 0.0)
    checks = suites.SUITES["gaussian_model"].checks + [Check("broken", broken)]
    monkeypatch.setattr(suites.SUITES["gaussian_model"], "checks", checks)
    assert run("run", "--suite", "gaussian_model", "--out", tmp_path) == 1
    out = capsys.readouterr().out
    assert "FAIL gaussian_model" in out and "violated broken/one below zero" in out


def test_report_diff_detects_changes(tmp_path, capsys):
    assert run("run", "--suite", "gaussian_model", "--out", tmp_path) == 0
    src = next(tmp_path.glob("report-*.json"))
    doc = json.loads(src.read_text())
    doc["suites"][0]["records"][0]["margin"] += 1.0
    other = tmp_path / "other.json"
    other.write_text(json.dumps(doc))
    capsys.readouterr()
    assert run("report", "diff", src, other) == 1
    assert "margin" in capsys.readouterr().out
    other.write_text("{not json")
    assert run("report", "diff", src, other) == 2


def test_flow_bake_round_trips(tmp_path):
    target = tmp_path / "flow.json"
    assert run("flow", "bake", "--grid", 64, "--output", target) == 0
    flow = flow_from_json(target.read_text())
    assert flow.grid.size == 64


def test_flow_bake_exact_kind_writes_a_table(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("flow:\n  kind: round_sphere\n  t_max: 0.2\n")
    assert run("flow", "bake", "--config", cfg, "--out", tmp_path, "--samples", 5) == 0
    doc = json.loads(next(tmp_path.glob("flow-*.json")).read_text())
    assert doc["schema"] == cli.FLOW_TABLE_SCHEMA and len(doc["times"]) == 5


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rflab", "list", "paths"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("pathspace")
