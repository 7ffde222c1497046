import json

import pytest

from crossing_lab.cli import main
from crossing_lab.config import ConfigError, parse_config
from crossing_lab.report import emit_report

RENEWAL = """schema = 1
kind = "renewal"
atoms = [[0.0, 0.5], [1.0, 0.5]]
master_seed = 7
R = 12
mode = "exact"
"""

LYAP = """schema = 1
kind = "lyapunov"
atoms = [[0.0, 0.5], [1.0, 0.5]]
master_seed = 11
y = 48
n_envs = 100
R = 10
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("text,msg", [
    (RENEWAL.replace("master_seed = 7\n", ""), "master_seed"),
    (RENEWAL.replace("schema = 1", "schema = 2"), "schema"),
    (RENEWAL.replace("[1.0, 0.5]", "[1.0, 0.6]"), "sum"),
    (RENEWAL.replace("[1.0, 0.5]", "[-1.0, 0.5]"), "atoms"),
    (RENEWAL + "bogus = 1\n", "bogus"),
    (RENEWAL.replace('kind = "renewal"', 'kind = "nope"'), "kind"),
    (RENEWAL.replace("R = 12\n", ""), "R"),
    ("not = [toml", "syntax"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_config_defaults():
    cfg = parse_config(RENEWAL)
    assert cfg.kind == "renewal" and cfg.master_seed == 7 and cfg["n_envs"] == 1000
    assert cfg.dist.satisfies_d1


def test_malformed_leaves_no_artifacts(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", RENEWAL.replace("[1.0, 0.5]", "[1.0, -0.5]"))
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) != 0
    assert not out.exists()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.toml"]


def test_renewal_run_and_report(tmp_path):
    cfg = _write(tmp_path, "ren.toml", RENEWAL)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    assert (out / "kernel.csv").read_text().startswith("r,zbar,nbar,q,g\n")
    assert (out / "block_table.csv").read_text().startswith("r,z0,z0_stderr,a,a_stderr\n")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == 1 and summary["provenance"]["master_seed"] == 7
    assert summary["results"]["renewal"]["beta"] > 0 and summary["results"]["renewal"]["v"] > 0
    text = emit_report(tmp_path)
    assert "mass defect" in text and "tail rate epsilon" in text and "sum of q" in text
    assert main(["report", str(out), "--write"]) == 0
    assert (out / "report.md").exists()


def test_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, "l.toml", LYAP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--out", str(a), "--workers", "1"]) == 0
    assert main(["run", str(cfg), "--out", str(b), "--workers", "2"]) == 0
    for name in ("block_table.csv", "kernel.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ra = json.loads((a / "summary.json").read_text())["results"]
    rb = json.loads((b / "summary.json").read_text())["results"]
    assert ra == rb


def test_negative_control_exit_zero(tmp_path):
    cfg = _write(tmp_path, "c.toml", """schema = 1
kind = "diagnostics"
atoms = [[0.0, 0.5], ["inf", 0.5]]
master_seed = 3
n_envs = 100
""")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    checks = {c["name"]: c for c in json.loads((out / "summary.json").read_text())["checks"]}
    assert checks["xy_tail"]["passed"] is False and checks["xy_tail"]["as_expected"] is True


def test_report_flags_unexpected_failures(tmp_path):
    out = tmp_path / "r"
    out.mkdir()
    (out / "summary.json").write_text(json.dumps({
        "kind": "diagnostics", "results": {}, "ok": False,
        "checks": [{"name": "jensen", "statistic": 2.0, "threshold": 1.0, "passed": False,
                    "expected_pass": True, "as_expected": False}]}))
    text = emit_report(tmp_path)
    assert "JENSEN" in text and "FAIL (UNEXPECTED)" in text


def test_report_empty_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_report(tmp_path)
    assert main(["report", str(tmp_path)]) == 2
