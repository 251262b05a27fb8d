import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from csrisk.cli import main, run

HAND = Path(__file__).resolve().parents[1] / "configs" / "entropic_hand.json"


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def hand_cfg():
    return json.loads(HAND.read_text())


def values(report, rule, unit):
    for entry in report["results"]:
        if entry["rule"] == rule and entry["unit"] == unit and entry["t"] == 0:
            return [s["value"] for s in entry["states"]]
    raise KeyError((rule, unit))


def test_hand_config(tmp_path):
    out = tmp_path / "report.json"
    assert main(["--config", str(HAND), "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["schema_version"] == 1 and "elapsed_seconds" not in report
    assert values(report, "risk", "aggregate")[0] == pytest.approx(0.5, abs=1e-12)
    assert values(report, "sub", 0)[0] == pytest.approx(0.0, abs=1e-12)
    assert values(report, "marginal", 1)[0] == pytest.approx(0.375, abs=1e-12)
    assert values(report, "aumann_shapley", 0)[0] == pytest.approx(0.25, abs=1e-10)
    total = [e for e in report["results"] if e["rule"] == "aumann_shapley" and e["unit"] == "total"][0]
    assert total["diagnostics"]["full_allocation_residual"] <= 1e-10


def test_deterministic_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["--config", str(HAND), "--output", str(a), "--deterministic"]) == 0
    assert main(["--config", str(HAND), "--output", str(b), "--deterministic"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_timing_only_when_not_deterministic(tmp_path):
    cfg = hand_cfg()
    cfg["deterministic"] = False
    assert "elapsed_seconds" in run(cfg)
    assert "elapsed_seconds" not in run(cfg, deterministic=True)


def test_csv_output(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["--config", str(HAND), "--output", str(out), "--format", "csv"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "rule,t,state,value"
    assert lines[1].startswith("risk,0,0,0.5")
    assert any(line.startswith("marginal[0],0,0,") for line in lines)


def test_node_layout_and_report_times(tmp_path):
    cfg = {"model": {"T": 1.0, "steps": 4}, "driver": {"type": "linear_ambiguous", "r": 0.05, "R": 0.1},
           "claims": {"aggregate": "B_T - 3", "sub_units": ["B_T / 2", "Y - B_T / 2"]},
           "rules": ["sub", "sub_bsvie", "marginal"], "output": {"report_times": [0, 2, 4]}}
    report = run(cfg, deterministic=True)
    assert len(values(report, "risk", "aggregate")) == 1
    last = [e for e in report["results"] if e["rule"] == "sub" and e["unit"] == 0 and e["t"] == 4][0]
    assert len(last["states"]) == 5
    # a sign-changing aggregate makes the selected rate random, which the node layout cannot carry
    cfg["claims"] = {"aggregate": "B_T", "sub_units": ["Y"]}
    cfg["rules"] = ["sub_bsvie"]
    assert main(["--config", write(tmp_path, cfg)]) == 2


def test_cserm_kappa_flag(tmp_path):
    cfg = hand_cfg()
    cfg["driver"] = {"type": "cserm", "beta": 0.0, "gamma": 1.0}
    cfg["rules"] = [{"tag": "cserm", "gamma1": 1.0}]
    report = run(cfg, kappa="2/g1", deterministic=True)
    entry = [e for e in report["results"] if e["rule"] == "cserm" and e["unit"] == 0][0]
    assert entry["diagnostics"]["kappa"] == 2.0 and entry["diagnostics"]["fd_residual"] > 1e-3
    assert report["config"]["kappa"] == "2/g1"


@pytest.mark.parametrize("change, message", [
    (lambda c: c["model"].update(steps=25), "20"),
    (lambda c: c["claims"].update(sub_units=["Y/2", "Y/3"]), "do not sum"),
    (lambda c: c["driver"].update(type="quadratic"), "unknown driver"),
    (lambda c: c.update(rules=["shapley"]), "rule"),
    (lambda c: c["claims"].update(aggregate="sin(B_T)"), "not allowed"),
    (lambda c: c["output"].update(report_times=[7]), "step"),
    (lambda c: c.pop("driver"), "driver"),
])
def test_configuration_errors_exit_2(tmp_path, capsys, change, message):
    cfg = hand_cfg()
    change(cfg)
    assert main(["--config", write(tmp_path, cfg)]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err and message in err


def test_missing_and_invalid_files(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["--config", str(bad)]) == 2


def test_infeasible_scenario_exits_3(tmp_path, capsys):
    cfg = hand_cfg()
    cfg["driver"] = {"type": "entropic", "gamma": 0.1}
    assert main(["--config", write(tmp_path, cfg)]) == 3
    assert "numeric error" in capsys.readouterr().err


def test_verify(tmp_path, capsys):
    out = tmp_path / "verify.json"
    assert main(["--verify", "comparison", "--count", "1", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["verify"]["passed"] and doc["verify"]["suite"] == "comparison"
    assert "[PASS] comparison/bsde_ordering" in capsys.readouterr().err
    assert main(["--verify", "car", "--count", "5", "--sign-variant", "paper"]) == 1
    assert "FAILED, worst row cross_method" in capsys.readouterr().err


def test_argument_errors():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["--verify", "all", "--kappa", "-1"])


def test_console_entry_point():
    env = dict(os.environ, CSRISK_USE_NUMBA="0")
    proc = subprocess.run([sys.executable, "-m", "csrisk", "--config", str(HAND), "--format", "csv"],
                          capture_output=True, text=True, env=env, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("rule,t,state,value\nrisk,0,0,0.5")
