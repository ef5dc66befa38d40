import csv
import json
import subprocess
import sys

import pytest

from relayabc.cli import main
from relayabc.config import preset


def write_config(path, **overrides):
    doc = preset("complete_h4_b1").to_document()
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


def test_run_preset(tmp_path):
    assert main(["run", "--config", "complete_h4_b1", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["validity"]["ok"] and report["converged_at"] is not None
    assert report["analysis"]["exactness_ok"]
    assert report["forged_records_in_views"] == 0
    assert (tmp_path / "states.csv").read_text().startswith("iteration,node_0")
    assert "simulate_seconds" in json.loads((tmp_path / "timing.json").read_text())


def test_run_config_file(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", T=20)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0


def test_run_too_many_byzantine(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        graph={"preset": "complete", "h": 2, "b": 1},
        initial_values=[0.0, 1.0],
        b_strategy={},
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2


def test_run_horizon_too_short(tmp_path):
    doc = preset("honest_cycle_h4_b1").to_document()
    doc["T"] = 2
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")]) == 2


def test_run_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 3


def test_analyze(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", T=40)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")])
    out = tmp_path / "an"
    code = main(["analyze", "--trace", str(tmp_path / "run" / "trace.jsonl"), "--out", str(out),
                 "--export-matrices"])
    assert code == 0
    result = json.loads((out / "analysis.json").read_text())
    assert len(result["phases"]) == 39
    assert result["max_equation_error"] < 1e-9 and result["stochastic_ok"]
    assert len(list((out / "matrices").glob("phase_*.csv"))) == 39


def test_analyze_truncated(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", T=10)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")])
    trace = tmp_path / "run" / "trace.jsonl"
    lines = trace.read_text().splitlines()
    trace.write_text("\n".join(lines[:-3]) + "\n")
    assert main(["analyze", "--trace", str(trace), "--out", str(tmp_path / "an")]) == 3


def test_analyze_short_trace_has_note(tmp_path):
    doc = preset("honest_cycle_h4_b1").to_document()
    doc["T"] = 4  # D = 3, so no phase 2
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run")]) == 0
    code = main(["analyze", "--trace", str(tmp_path / "run" / "trace.jsonl"), "--out", str(tmp_path / "an")])
    assert code == 0
    assert json.loads((tmp_path / "an" / "analysis.json").read_text())["note"] == "no analyzable phase"


def test_graphs(capsys):
    assert main(["graphs", "--h", "3", "--b", "1"]) == 0
    assert "r = 8" in capsys.readouterr().out
    assert main(["graphs", "--h", "5", "--b", "2"]) == 0
    out = capsys.readouterr().out
    assert "r = 7776" in out and "sourced = 7776" in out


def test_graphs_rejects_small_h():
    assert main(["graphs", "--h", "4", "--b", "2"]) == 2


def test_graphs_cap():
    assert main(["graphs", "--h", "5", "--b", "1", "--cap", "100"]) == 2


def test_sweep(tmp_path):
    template = write_config(tmp_path / "t.json", T=200)
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({
        "seeds": list(range(10)),
        "strategies": ["constant_extreme", "random_equivocate", "replay_stale"],
    }))
    assert main(["sweep", "--template", str(template), "--grid", str(grid), "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert len(rows) == 30
    assert all(r["validity"] == "valid" for r in rows)
    assert {r["seed"] for r in rows} == {str(s) for s in range(10)}


def test_sweep_empty_grid(tmp_path):
    (tmp_path / "g.json").write_text("{}")
    assert main(["sweep", "--template", "complete_h4_b1", "--grid", str(tmp_path / "g.json"),
                 "--out", str(tmp_path / "s")]) == 0
    assert not (tmp_path / "s" / "sweep.csv").exists()


def test_sweep_reports_invalid_cell(tmp_path):
    edges = [[0, 1], [1, 0], [2, 3], [3, 2]] + [[i, 4] for i in range(4)] + [[4, i] for i in range(4)]
    disconnected = {"m": 5, "byzantine": [4], "edges": edges}
    template = write_config(tmp_path / "t.json", T=30)
    (tmp_path / "g.json").write_text(json.dumps({
        "graphs": [{"preset": "complete", "h": 4, "b": 1}, disconnected],
    }))
    code = main(["sweep", "--template", str(template), "--grid", str(tmp_path / "g.json"),
                 "--out", str(tmp_path / "s")])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert len(rows) == 2
    assert rows[0]["validity"] == "valid"
    assert "honest_connectivity" in rows[1]["validity"]


def test_report_bytes_deterministic(tmp_path):
    for d in ("a", "b"):
        main(["run", "--config", "complete_h3_b1_scrambling", "--out", str(tmp_path / d)])
    for name in ("report.json", "trace.jsonl", "states.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "relayabc", "graphs", "--h", "3", "--b", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "sourced = 8" in proc.stdout


def test_bad_subcommand():
    with pytest.raises(SystemExit):
        main(["teleport"])


def test_settled_at_ignores_transient_dips():
    from relayabc.harness import settled_at

    assert settled_at([3, 0, 1, 0.5, 0, 0], 1e-6) == 4
    assert settled_at([0, 0], 1e-6) == 0
    assert settled_at([0, 1], 1e-6) is None
