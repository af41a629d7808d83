import json
import subprocess
import sys

import numpy as np
import pytest

from epivax.cli import main
from epivax.models import preset_scenario, simulate
from epivax.reproduction import peak
from epivax.scenario_io import read_trajectory_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_r0_epidemic(capsys):
    code, out, _ = run(capsys, "r0", "--scenario", "epidemic")
    doc = json.loads(out)
    assert code == 0
    assert doc["R0"] == pytest.approx(2.46, abs=0.01)
    assert doc["R0"] == 2.456  # four significant digits
    assert doc["p_c"] == pytest.approx(0.593, abs=1e-3)


def test_r0_with_strategy_values(capsys):
    code, out, _ = run(capsys, "r0", "--scenario", "endemic", "--psi", "0.05", "--sigma", "0.2")
    doc = json.loads(out)
    assert code == 0 and doc["R0"] == 1.29
    assert doc["R0_imperfect"] > doc["R0_mass"]


def test_simulate_summary_and_csv(capsys, tmp_path):
    out_csv = tmp_path / "epi.csv"
    code, out, _ = run(capsys, "simulate", "--scenario", "epidemic", "--out", str(out_csv))
    assert code == 0
    summary = json.loads(out)
    t_pk, v_pk = peak(simulate(preset_scenario("epidemic")))
    assert summary["peak"] == {"t": t_pk, "I_h": v_pk}
    traj, control = read_trajectory_csv(out_csv)
    assert control is None and len(traj) == 7301
    assert peak(traj) == (t_pk, v_pk)


def test_simulate_scenario_file(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"preset": "epidemic", "strategy": {"type": "mass", "psi": 0.05},
                                "scenario": {"horizon": 100}}))
    code, out, _ = run(capsys, "simulate", "--scenario", str(path), "--step", "0.1")
    summary = json.loads(out)
    assert code == 0 and summary["solver"]["points"] == 1001
    assert summary["strategy"] == {"type": "mass", "psi": 0.05}


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["fly"])
    assert err.value.code == 2


def test_missing_scenario_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == 2


def test_validation_error_exits_1(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"preset": "epidemic", "scenario": {"params": {"beta_mh": 1.5}}}')
    code, out, err = run(capsys, "simulate", "--scenario", str(path))
    assert code == 1 and out == ""
    assert "beta_mh" in err


def test_unknown_preset_file_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, "r0", "--scenario", str(tmp_path / "none.json"))
    assert code == 1 and "cannot read" in err


def test_sweep_table(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--scenario", "epidemic", "--vary", "p",
                       "--values", "0,0.5,1", "--out-dir", str(tmp_path))
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "p,t_peak,I_h_peak"
    peaks = [float(line.split(",")[2]) for line in lines[1:]]
    assert len(peaks) == 3 and peaks[0] >= peaks[1] >= peaks[2]
    assert (tmp_path / "epidemic_p_peaks.csv").exists()
    assert (tmp_path / "epidemic_p_0.5.csv").exists()


def test_sweep_deterministic_files(capsys, tmp_path):
    for sub in ("a", "b"):
        run(capsys, "sweep", "--scenario", "endemic", "--vary", "theta", "--values", "0,0.2",
            "--out-dir", str(tmp_path / sub))
    for name in ("endemic_theta_peaks.csv", "endemic_theta_0.2.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_values_exit_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["sweep", "--scenario", "epidemic", "--vary", "p", "--values", "a,b"])
    assert err.value.code == 2


def test_optimize_short_horizon(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"preset": "endemic", "scenario": {"horizon": 20, "label": "short"},
                                "solver": {"n_intervals": 2, "starts": [0.0]}}))
    code, out, _ = run(capsys, "optimize", "--scenario", str(path), "--out-dir", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    methods = [r["method"] for r in doc["reports"]]
    assert methods == ["indirect", "direct"]
    traj, u = read_trajectory_csv(tmp_path / "short_indirect.csv")
    assert u is not None and traj.states[0, 0] == 379990.0
    assert np.all(traj["V_h"] == 0.0)


def test_optimize_thetas(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"preset": "endemic", "scenario": {"horizon": 10}}))
    code, out, _ = run(capsys, "optimize", "--scenario", str(path), "--thetas", "0,0.1")
    doc = json.loads(out)
    assert code == 0 and [r["theta"] for r in doc["reports"]] == [0.0, 0.1]


def test_compare_short_horizon(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"preset": "epidemic", "scenario": {"horizon": 30, "label": "c"}}))
    code, out, _ = run(capsys, "compare", "--scenario", str(path), "--out-dir", str(tmp_path))
    doc = json.loads(out)
    assert code == 0
    costs = doc["costs"]
    assert costs["optimal"] < costs["no control"] < costs["upper control"]
    assert (tmp_path / "c_policies_cost.csv").read_text().startswith("policy,cost\n")


def test_presets(capsys):
    code, out, _ = run(capsys, "presets")
    doc = json.loads(out)
    assert code == 0 and set(doc) == {"epidemic", "endemic"}
    assert doc["endemic"]["initial"]["R_h"] == 100000


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "epivax", "r0", "--scenario", "endemic"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["R0"] == 1.29
