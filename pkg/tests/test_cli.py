import json
import math
import subprocess
import sys

import pytest
import yaml

from stabman.cli import load_config, main, run
from stabman.errors import ConfigError

SADDLE = {"kind": "polynomial", "n": 2, "terms": [
    {"out": 0, "exps": [1, 0], "coef": -1.0}, {"out": 1, "exps": [0, 1], "coef": 1.0}]}
QUAD = {"kind": "polynomial", "n": 2, "terms": SADDLE["terms"] + [
    {"out": 1, "exps": [2, 0], "coef": 1.0}]}


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_analyze_reports_constants(tmp_path):
    cfg = write(tmp_path, "a.yaml", {"matrix": [[-1.0, 0.0], [0.0, 1.0]], "output_dir": "out"})
    assert run("analyze", cfg) == 0
    recs = records(tmp_path / "out" / "analyze.jsonl")
    assert recs[0]["record"] == "meta" and recs[0]["schema"] == "stabman-report/1"
    consts = {r["name"]: r["value"] for r in recs if r["record"] == "constant"}
    assert consts["K_A"] == pytest.approx(math.sqrt(2))


def test_thresholds_report(tmp_path):
    cfg = write(tmp_path, "t.yaml", {"field": SADDLE, "gamma": -0.5})
    assert run("thresholds", cfg, tmp_path / "o") == 0
    thr = {r["name"]: r for r in records(tmp_path / "o" / "thresholds.jsonl")
           if r["record"] == "threshold"}
    assert thr["hyp3_bound"]["value"] == pytest.approx(1 / 64, rel=1e-15)
    assert thr["delta_tilde"]["constants"] == {"C2": 1.0}


def test_solve_graph_writes_grid(tmp_path):
    cfg = write(tmp_path, "g.yaml", {"field": QUAD, "h": 0.02, "points": [{"z": [0.05]}]})
    assert run("solve-graph", cfg, tmp_path) == 0
    recs = records(tmp_path / "solve-graph.jsonl")
    assert recs[0]["N"] > 0 and recs[0]["h"] == pytest.approx(0.02)
    assert (tmp_path / "phi_grid.csv").exists()


def test_config_errors(tmp_path):
    bad = write(tmp_path, "bad.yaml", {"field": SADDLE, "colour": "red"})
    with pytest.raises(ConfigError):
        load_config(bad)
    assert run("analyze", bad) == 3
    neg = write(tmp_path, "neg.yaml", {"field": SADDLE, "picard_tol": -1.0})
    assert run("analyze", neg) == 3


def test_library_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "cut.yaml", {"field": SADDLE, "cut": 1.0, "output_dir": "o"})
    assert run("analyze", cfg) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["record"] == "error" and err["error"] == "domain"
    assert records(tmp_path / "o" / "analyze.jsonl")[-1]["record"] == "error"


def test_config_hash_is_stable(tmp_path):
    a = write(tmp_path, "a.yaml", {"field": SADDLE, "seed": 3})
    b = tmp_path / "b.json"
    b.write_text(json.dumps({"seed": 3, "field": SADDLE}))
    assert load_config(a).sha256 == load_config(b).sha256


def test_contraction_command(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"field": QUAD, "h": 0.02, "trials": 50})
    assert run("contraction", cfg, tmp_path) == 0
    rec = [r for r in records(tmp_path / "contraction.jsonl") if r["record"] == "contraction"]
    assert rec and rec[0]["max_ratio"] <= 0.5 + 1e-6


def test_entry_point_runs(tmp_path):
    cfg = write(tmp_path, "a.yaml", {"matrix": [[-2.0, 0.0], [0.0, 1.0]]})
    proc = subprocess.run([sys.executable, "-m", "stabman.cli", "analyze", str(cfg), "-o",
                           str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "x" / "analyze.jsonl").exists()
    assert main(["analyze", str(cfg), "-o", str(tmp_path / "y")]) == 0
