import json
import os
import subprocess
import sys

import numpy as np
import pytest

import expmech as em
from expmech.cli import ConfigError, fmt, main, run_config


def _write_cfg(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_fmt_canonical_cells():
    assert fmt(5) == "5"
    assert fmt(True) == "1" and fmt(False) == "0"
    assert fmt(None) == ""
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(2.0)) == "2"
    assert fmt("origin") == "origin"


def test_privacy_table_via_subprocess(tmp_path):
    cfg = _write_cfg(tmp_path, "cfg.json", {
        "experiment": "privacy_table",
        "epsilons": [0.5, 1.0], "deltas": [1e-6, 1e-3],
    })
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        proc = subprocess.run(
            [sys.executable, "-m", "expmech.cli", "--config", cfg, "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "[PASS]" in proc.stdout and "[FAIL]" not in proc.stdout
    csv1 = (out1 / "privacy_table.csv").read_bytes()
    csv2 = (out2 / "privacy_table.csv").read_bytes()
    assert csv1 == csv2

    lines = csv1.decode().strip().split("\n")
    assert lines[0] == "epsilon,delta,s,delta_at_s"
    assert len(lines) == 5
    # golden check of one cell against the library calibration
    want = em.calibrate_shift(em.PrivacyBudget(1.0, 1e-6)).s
    row = [ln for ln in lines[1:] if ln.startswith("1,9.9999999999999995e-07")]
    assert row and row[0].split(",")[2] == fmt(want)

    summary = json.loads((out1 / "privacy_table_summary.json").read_text())
    assert summary["passed"] is True
    assert summary["detail"]["rows"] == 4


def test_privacy_table_tighten(tmp_path):
    code, summary = run_config({
        "experiment": "privacy_table", "epsilons": [0.3],
        "deltas": [1e-4], "tighten": True,
    }, out_dir=str(tmp_path))
    assert code == 0 and summary["detail"]["tighten"] is True
    loose = em.calibrate_shift(em.PrivacyBudget(0.3, 1e-4)).s
    tight = em.calibrate_shift(em.PrivacyBudget(0.3, 1e-4), tighten=True).s
    assert tight >= loose


def test_tv_check_runs_and_is_deterministic(tmp_path):
    cfg = {
        "experiment": "tv_check", "seed": 5,
        "body": {"type": "box", "lower": [-1.0], "upper": [1.0]},
        "loss": {"kind": "linear", "data": [[1.0]]},
        "mu": 1.0, "k": 1.0, "delta_tv": 0.01,
        "draws": 10000, "bins": 50, "constants": "desk", "noise_floor": 0.03,
    }
    code1, s1 = run_config(cfg, out_dir=str(tmp_path / "r1"))
    assert code1 == 0, s1["assertions"]
    assert s1["detail"]["tv"] <= 0.04
    assert s1["detail"]["queries_per_step"] <= 32
    code2, s2 = run_config(cfg, out_dir=str(tmp_path / "r2"))
    b1 = (tmp_path / "r1" / "tv_check.csv").read_bytes()
    b2 = (tmp_path / "r2" / "tv_check.csv").read_bytes()
    assert b1 == b2
    assert len(b1.decode().strip().split("\n")) == 51
    assert s1["detail"]["tv"] == s2["detail"]["tv"]


def test_query_scaling_small_grid(tmp_path):
    cfg = {
        "experiment": "query_scaling",
        "n_grid": [40, 80], "d_grid": [1],
        "epsilon": 1.0, "delta": 1e-4, "mode": "erm",
        "G": 1.0, "D": 2.0, "repetitions": 1, "constants": "desk",
        "slope_range": [1.0, 3.0], "max_queries_per_step": 32,
        "delta_tv": 0.01,
    }
    code, summary = run_config(cfg, out_dir=str(tmp_path))
    assert code == 0, summary["assertions"]
    assert "1" in summary["detail"]["slopes"]
    lines = (tmp_path / "query_scaling.csv").read_text().strip().split("\n")
    assert lines[0].startswith("n,d,measured_queries")
    assert len(lines) == 3


def test_erm_experiment_small(tmp_path):
    cfg = {
        "experiment": "erm", "n": 20, "d": 1, "G": 1.0, "D": 2.0,
        "epsilon": 2.0, "delta": 0.2, "repetitions": 5,
        "constants": "desk", "delta_tv": 0.01, "seed": 1,
    }
    code, summary = run_config(cfg, out_dir=str(tmp_path))
    assert code == 0, summary["assertions"]
    lines = (tmp_path / "erm.csv").read_text().strip().split("\n")
    assert lines[0] == "rep,excess_risk" and len(lines) == 6
    assert summary["detail"]["mean_excess"] <= summary["detail"]["erm_bound"] + 1.0


def test_sco_experiment_small(tmp_path):
    cfg = {
        "experiment": "sco", "n": 50, "d": 2, "G": 1.0, "D": 2.0,
        "epsilon": 1.0, "delta": 0.1, "repetitions": 3,
        "constants": "desk", "delta_tv": 0.01, "seed": 2,
    }
    code, summary = run_config(cfg, out_dir=str(tmp_path))
    assert code == 0, summary["assertions"]
    assert summary["detail"]["branch"] == "dimension"
    lines = (tmp_path / "sco.csv").read_text().strip().split("\n")
    assert lines[0] == "rep,population_excess" and len(lines) == 4


def test_hard_instance_gap_identities(tmp_path):
    cfg = {
        "experiment": "hard_instance_gap",
        "n": 100, "d": 4, "G": 2.0, "D": 2.0, "k_budget": 4.0,
    }
    code1, s1 = run_config(cfg, out_dir=str(tmp_path / "a"), seed=9)
    code2, _ = run_config(cfg, out_dir=str(tmp_path / "b"), seed=9)
    assert code1 == 0 and code2 == 0
    assert (tmp_path / "a" / "hard_instance_gap.csv").read_bytes() == \
           (tmp_path / "b" / "hard_instance_gap.csv").read_bytes()
    assert s1["detail"]["sigma"] == pytest.approx(2.0 / 5**0.5, rel=1e-12)


def test_schema_violations_exit_2(tmp_path):
    bad_json = tmp_path / "broken.json"
    bad_json.write_text("{not valid json")
    assert main(["--config", str(bad_json), "--out", str(tmp_path)]) == 2
    assert main(["--config", str(tmp_path / "missing.json")]) == 2

    for cfg in (
        {"experiment": "warp_drive"},
        {"experiment": "privacy_table", "epsilons": [1.0], "deltas": [1e-6],
         "bogus_key": 1},
        {"experiment": "tv_check",
         "body": {"type": "box", "lower": [-1.0], "upper": [1.0]},
         "loss": {"kind": "linear", "data": [[1.0]]},
         "mu": 1.0, "k": 1.0, "delta_tv": 0.01, "bins": 50},   # draws missing
        {"experiment": "tv_check",
         "body": {"type": "box", "lower": [-1.0], "upper": [1.0]},
         "loss": {"kind": "hinge", "data": [[1.0]]},
         "mu": 1.0, "k": 1.0, "delta_tv": 0.01, "draws": 10000, "bins": 50},
        {"experiment": "erm", "n": 10, "d": 1, "G": 1.0, "D": 2.0,
         "epsilon": -1.0, "delta": 0.2, "repetitions": 2},
    ):
        path = _write_cfg(tmp_path, "bad.json", cfg)
        assert main(["--config", path, "--out", str(tmp_path)]) == 2, cfg
    with pytest.raises(ConfigError):
        run_config(["not", "a", "dict"])


def test_uncalibratable_run_exits_1(tmp_path):
    cfg = _write_cfg(tmp_path, "cfg.json", {
        "experiment": "erm", "n": 10, "d": 1, "G": 1.0, "D": 2.0,
        "epsilon": 1.0, "delta": 0.6, "repetitions": 2,
    })
    assert main(["--config", cfg, "--out", str(tmp_path)]) == 1
    summary = json.loads((tmp_path / "erm_summary.json").read_text())
    assert summary["passed"] is False
    names = [r["name"] for r in summary["assertions"]]
    assert "run_completed" in names


def test_thread_resolution_order(tmp_path, monkeypatch):
    cfg = {"experiment": "privacy_table", "epsilons": [1.0], "deltas": [1e-6]}
    monkeypatch.setenv("EXPMECH_THREADS", "2")
    _, summary = run_config(dict(cfg), out_dir=str(tmp_path / "env"))
    assert summary["threads"] == 2
    _, summary = run_config(dict(cfg, threads=3), out_dir=str(tmp_path / "cfg"))
    assert summary["threads"] == 3
    _, summary = run_config(dict(cfg, threads=3), out_dir=str(tmp_path / "arg"),
                            threads=4)
    assert summary["threads"] == 4
    monkeypatch.delenv("EXPMECH_THREADS")
    _, summary = run_config(dict(cfg), out_dir=str(tmp_path / "none"))
    assert summary["threads"] == 1


def test_seed_resolution_order(tmp_path):
    cfg = {"experiment": "privacy_table", "epsilons": [1.0], "deltas": [1e-6],
           "seed": 7}
    _, summary = run_config(dict(cfg), out_dir=str(tmp_path))
    assert summary["seed"] == 7
    _, summary = run_config(dict(cfg), out_dir=str(tmp_path), seed=11)
    assert summary["seed"] == 11
    path = _write_cfg(tmp_path, "cfg.json", cfg)
    assert main(["--config", path, "--out", str(tmp_path), "--seed", "-3"]) == 2
