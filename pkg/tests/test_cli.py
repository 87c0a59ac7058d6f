"""Command-line interface: files, formats, determinism, exit codes."""
import json
import subprocess
import sys

import numpy as np
import pytest

from ticsp import DEFAULT_PARAMETERS
from ticsp.cli import main

P = DEFAULT_PARAMETERS


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


# ---------------------------------------------------------------------------
# simulate

def test_simulate_writes_trajectory_and_timescales(tmp_path):
    out = tmp_path / "tp"
    assert run_cli("simulate", "--scenario", "TP", "--out", out) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "t,T,N,L,C"
    final_T = float(rows[-1].split(",")[1])
    assert final_T == pytest.approx(9.8e8, rel=0.01)
    ts_header = (out / "timescales.csv").read_text().splitlines()[0]
    assert ts_header == ("t,tau1,tau2,tau3,tau4,"
                         "re_lambda1,re_lambda2,re_lambda3,re_lambda4,explosive_flag")
    config = json.loads((out / "config.json").read_text())
    assert config["command"] == "simulate"
    assert config["parameters"] == P.to_dict()


def test_simulate_short_horizon_needs_no_settling(tmp_path):
    # A 25-day horizon ends mid-relaxation (C is ~30% below equilibrium);
    # writing the trajectory must not require classifying the attractor.
    out = tmp_path / "short"
    assert run_cli("simulate", "--scenario", "TP", "--t-end", 25, "--out", out) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert float(rows[-1].split(",")[0]) == pytest.approx(25.0)
    assert float(rows[-1].split(",")[1]) == pytest.approx(9.8e8, rel=0.05)
    assert (out / "timescales.csv").exists()


def test_simulate_rejects_zero_horizon(tmp_path, capsys):
    out = tmp_path / "rejected"
    assert run_cli("simulate", "--scenario", "TP", "--t-end", 0, "--out", out) != 0
    assert "t-end" in capsys.readouterr().err
    assert not (out / "trajectory.csv").exists()


def test_simulate_unknown_scenario(tmp_path, capsys):
    assert run_cli("simulate", "--scenario", "NOPE", "--out", tmp_path / "x") != 0
    assert "unknown scenario" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("simulate", "--scenario", "TR", "--out", a) == 0
    assert run_cli("simulate", "--scenario", "TR", "--out", b) == 0
    for name in ("trajectory.csv", "timescales.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TICSP_OUT", str(tmp_path))
    assert run_cli("equilibria") == 0
    assert (tmp_path / "equilibria" / "equilibria.json").exists()


# ---------------------------------------------------------------------------
# equilibria

def test_equilibria_json(tmp_path):
    out = tmp_path / "eq"
    assert run_cli("equilibria", "--out", out) == 0
    data = json.loads((out / "equilibria.json").read_text())
    assert len(data) == 3
    kinds = sorted((e["kind"], e["stable"]) for e in data)
    assert kinds == [("HTE", False), ("HTE", True), ("TFE", True)]
    stable_hte = next(e for e in data if e["kind"] == "HTE" and e["stable"])
    assert stable_hte["T"] == pytest.approx(9.8e8, rel=0.01)
    assert all(e["feasible"] for e in data)


# ---------------------------------------------------------------------------
# bifurcate

def test_bifurcate_locates_transcritical(tmp_path):
    out = tmp_path / "bif"
    assert run_cli("bifurcate", "--param", "d", "--from", 0.05, "--to", 1.0,
                   "--steps", 12, "--out", out) == 0
    summary = json.loads((out / "bifurcation_summary.json").read_text())
    assert summary["parameter"] == "d"
    assert summary["transcritical"] == pytest.approx(0.43097977427184464, rel=1e-9)
    rows = (out / "bifurcation.csv").read_text().splitlines()
    assert rows[0] == "param_name,param_value,branch_id,T_star,stable,kind"
    kinds = {r.split(",")[5] for r in rows[1:]}
    assert kinds == {"TFE", "HTE"}


# ---------------------------------------------------------------------------
# csp

def test_csp_diagnostics_format(tmp_path):
    out = tmp_path / "csp"
    assert run_cli("csp", "--scenario", "TP", "--out", out) == 0
    rows = (out / "timescales.csv").read_text().splitlines()
    assert len(rows) > 200
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == "t,t_over_texp,mode_or_variable,index_type,target,value"
    # 4 checkpoints x (4 modes x (15 API + 15 TPI + 4 Po) + 4 vars x 15 II)
    assert len(lines) == 1 + 4 * (4 * 34 + 60)
    api1 = [float(l.split(",")[5]) for l in lines[1:]
            if l.split(",")[1:5][0] == "0.5" and l.split(",")[2] == "1"
            and l.split(",")[3] == "API"]
    assert len(api1) == 15
    assert np.abs(api1).sum() == pytest.approx(1.0, abs=1e-10)


def test_csp_custom_checkpoints(tmp_path):
    out = tmp_path / "csp1"
    assert run_cli("csp", "--scenario", "TP", "--checkpoints", "0.5",
                   "--out", out) == 0
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert len(lines) == 1 + (4 * 34 + 60)


# ---------------------------------------------------------------------------
# reduce

def test_reduce_outputs(tmp_path):
    out = tmp_path / "red"
    assert run_cli("reduce", "--scenario", "TP", "--out", out) == 0
    rows = (out / "reduced_trajectory.csv").read_text().splitlines()
    assert rows[0] == "t,T,C,N_hat,L_hat"
    errs = (out / "constraint_errors.csv").read_text().splitlines()
    assert errs[0] == "t,t_over_texp,RE_N,RE_L"
    summary = json.loads((out / "reduce_summary.json").read_text())
    assert summary["attractor_agreement"] is True
    assert summary["effective_parameter_count"] == 10
    assert summary["max_rel_err"]["C"] < 1e-9


# ---------------------------------------------------------------------------
# perturb

def test_perturb_report(tmp_path):
    out = tmp_path / "pert"
    assert run_cli("perturb", "--param", "e", "--factor", 0.6, "--out", out) == 0
    rep = json.loads((out / "perturbation.json").read_text())
    assert 0.55 < rep["mean_ratio"]["N"] < 0.65
    assert abs(rep["rel_delta_t_exp"]) < 0.05
    assert rep["verdicts"]["N"] == "decrease"


def test_perturb_rejects_bad_factor(tmp_path, capsys):
    assert run_cli("perturb", "--param", "e", "--factor", 0,
                   "--out", tmp_path / "x") != 0
    assert "factor" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# threshold

def test_threshold_family(tmp_path):
    out = tmp_path / "thr"
    assert run_cli("threshold", "--scenario", "TP1-family",
                   "--bracket", 319000, 320000, "--out", out) == 0
    data = json.loads((out / "threshold.json").read_text())
    assert 319192.5 <= data["threshold"] <= 319592.5
    assert data["N0"] == 1e3 and data["L0"] == 1e1 and data["C0"] == 6e8


def test_threshold_bad_bracket(tmp_path, capsys):
    assert run_cli("threshold", "--bracket", 1e9, 2e9,
                   "--out", tmp_path / "x") != 0
    assert capsys.readouterr().err.startswith("error:")


# ---------------------------------------------------------------------------
# report

def test_report_json(tmp_path):
    out = tmp_path / "rep"
    assert run_cli("report", "--scenario", "TR", "--out", out) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["attractor"] == "TFE"
    assert rep["t_exp"] == pytest.approx(2.3016, rel=1e-3)
    assert rep["persistent"]["C"] == [3, 6]
    tpi3 = next(t for t in rep["tables"]
                if t["t_over_texp"] == 0.5 and t["kind"] == "TPI" and t["row"] == "mode 3")
    leading = {entry[0] for entry in tpi3["entries"]}
    assert {12, 14} <= leading


# ---------------------------------------------------------------------------
# entry point

def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ticsp.cli", "equilibria", "--out", str(tmp_path / "e")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "e" / "equilibria.json").exists()
