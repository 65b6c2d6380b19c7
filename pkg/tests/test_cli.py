import csv
import json
import math
from pathlib import Path

import pytest

from efdyn.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_report(out):
    return json.loads((Path(out) / "report.json").read_text())


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_d1(tmp_path, capsys):
    assert main(["solve", "--config", str(CONFIGS / "d1.json"), "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path)
    s = rep["solve"]
    assert s["roots"] == 2 and s["realisations"] == 2
    assert s["oracle_max_relative_deviation"] <= 1e-8
    assert s["complexity"] == pytest.approx(math.log(2))
    assert rep["effective_config"]["run"]["seed"] == 7
    assert len(rep["input_digest"]) == 64
    etas = sorted(float(r["eta"]) for r in read_rows(tmp_path / "roots.csv"))
    assert etas == pytest.approx([(1 - math.sqrt(2)) / 2, (1 + math.sqrt(2)) / 2], abs=1e-10)
    for name in ("hamiltonian", "truncated", "spectrum", "densities", "realisations", "expectation"):
        assert (tmp_path / f"{name}.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_solve_uncoupled(tmp_path):
    assert main(["solve", "--config", str(CONFIGS / "d1_uncoupled.json"), "--out", str(tmp_path)]) == 0
    s = read_report(tmp_path)["solve"]
    assert s["surviving_roots"] == 1 and s["decoupled_roots"] == 1
    assert s["realisations"] == 1 and s["complexity"] == 0.0
    assert s["regime"] == "SOC"


def test_solve_double_well_clusters(tmp_path):
    assert main(["solve", "--config", str(CONFIGS / "double_well.json"), "--out", str(tmp_path)]) == 0
    s = read_report(tmp_path)["solve"]
    assert s["roots"] == 3 * 24
    assert 1 < s["realisations"] < s["surviving_roots"]
    assert abs(sum(s["alpha_born"]) - 1) <= 1e-12


def test_policy_override(tmp_path):
    args = ["solve", "--config", str(CONFIGS / "d1.json"), "--out", str(tmp_path), "--policy", "cluster:100"]
    assert main(args) == 0
    assert read_report(tmp_path)["solve"]["realisations"] == 1


@pytest.mark.parametrize("payload, fragment", [
    ("{not json", "JSON"),
    (json.dumps({"system": {"grid": {"coordinates": [1.0, 0.0], "weights": [1, 1]},
                            "channels": {"energies": [0, 1]},
                            "coupling": {"kind": "table", "blocks": {}}}}), "ordering"),
    (json.dumps({"system": {"grid": {"coordinates": [0.0], "weights": [1.0]},
                            "channels": {"energies": [0, 1]},
                            "coupling": {"kind": "table", "blocks": {"0,1": [[1.0]], "1,0": [[2.0]]}}}}),
     "transpose"),
])
def test_malformed_config_exit_2(tmp_path, capsys, payload, fragment):
    cfg = tmp_path / "bad.json"
    cfg.write_text(payload)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and fragment in err


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_verify_small_and_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--trials", "5", "--seed", "3", "--out", str(a)]) == 0
    assert main(["verify", "--trials", "5", "--seed", "3", "--out", str(b)]) == 0
    assert (a / "verify.csv").read_bytes() == (b / "verify.csv").read_bytes()
    rows = read_rows(a / "verify.csv")
    assert len(rows) == 5 and all(r["passed"] == "1" for r in rows)


def test_verify_fault_injection(tmp_path, capsys):
    assert main(["verify", "--trials", "5", "--inject-fault", "2", "--out", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "trial 2: FAIL" in out
    assert read_report(tmp_path)["verify"]["failed_trials"] == [2]


def test_simulate_repeatable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["simulate", "--config", str(CONFIGS / "d1.json"), "--steps", "2000"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b)]) == 0
    for name in ("trajectory.csv", "frequencies.csv", "roots.csv", "realisations.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sim = read_report(a)["simulation"]
    assert sim["steps"] == 2000 and sim["action_ledger_exact"]
    rows = read_rows(a / "trajectory.csv")
    assert float(rows[-1]["action"]) == -2000.0
    assert main(base + ["--out", str(tmp_path / "c"), "--seed", "8"]) == 0
    assert (a / "trajectory.csv").read_bytes() != (tmp_path / "c" / "trajectory.csv").read_bytes()


def test_kinematics_point(capsys):
    assert main(["kinematics", "--v", "1e6"]) == 0
    out = capsys.readouterr().out
    assert "lambdaB" in out and "nu0" in out


def test_kinematics_at_rest_reports_absent_wavelength(capsys):
    assert main(["kinematics"]) == 0
    assert "absent" in capsys.readouterr().out


def test_kinematics_sweep(tmp_path):
    assert main(["kinematics", "--sweep", "50", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "kinematics_sweep.csv")
    assert len(rows) == 50
    assert max(float(r["max_identity_residual"]) for r in rows) <= 1e-12


def test_superluminal_is_an_error(capsys):
    assert main(["kinematics", "--v", "3e8"]) == 1
    assert "error" in capsys.readouterr().err


def test_report_subcommand(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2
    main(["solve", "--config", str(CONFIGS / "d1.json"), "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[solve]" in out and "complexity" in out
